#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <limits>
#include <ostream>

namespace cep {

/**
 * Non-negative quantity that stays in linear space while it is small and
 * switches to a log2 representation once it would exceed `kLinearLimit`.
 *
 * Synthetic Kleene rates are 2^(r*W)/W, far beyond double range for any
 * realistic r*W, so every cost computation goes through this type.
 * Mixed comparisons promote the linear operand to log2.
 */
class Magnitude {
public:
    static constexpr double kLinearLimit = 1e300;

    constexpr Magnitude() = default;
    constexpr Magnitude(double linear) : value_(linear) {}  // NOLINT(google-explicit-constructor)

    [[nodiscard]] static Magnitude from_log2(double log2_value) {
        Magnitude m;
        if (log2_value < 996.0) {  // 2^996 < 1e300
            m.value_ = std::exp2(log2_value);
        } else {
            m.value_ = log2_value;
            m.is_log_ = true;
        }
        return m;
    }

    [[nodiscard]] bool is_log() const noexcept { return is_log_; }

    [[nodiscard]] double log2() const {
        return is_log_ ? value_ : std::log2(value_);
    }

    /// Linear value; +inf when the magnitude is held in log space.
    [[nodiscard]] double linear() const {
        return is_log_ ? std::numeric_limits<double>::infinity() : value_;
    }

    [[nodiscard]] bool is_zero() const noexcept { return !is_log_ && value_ == 0.0; }

    friend Magnitude operator*(const Magnitude& a, const Magnitude& b) {
        if (!a.is_log_ && !b.is_log_) {
            double p = a.value_ * b.value_;
            if (p <= kLinearLimit) return Magnitude(p);
        }
        if (a.is_zero() || b.is_zero()) return Magnitude(0.0);
        return from_log2(a.log2() + b.log2());
    }

    friend Magnitude operator/(const Magnitude& a, const Magnitude& b) {
        if (!a.is_log_ && !b.is_log_) {
            double q = a.value_ / b.value_;
            if (q <= kLinearLimit) return Magnitude(q);
        }
        if (a.is_zero()) return Magnitude(0.0);
        return from_log2(a.log2() - b.log2());
    }

    friend Magnitude operator+(const Magnitude& a, const Magnitude& b) {
        if (!a.is_log_ && !b.is_log_) {
            double s = a.value_ + b.value_;
            if (s <= kLinearLimit) return Magnitude(s);
        }
        if (a.is_zero()) return b;
        if (b.is_zero()) return a;
        double la = a.log2();
        double lb = b.log2();
        double hi = std::max(la, lb);
        double lo = std::min(la, lb);
        return from_log2(hi + std::log2(1.0 + std::exp2(lo - hi)));
    }

    Magnitude& operator+=(const Magnitude& o) { return *this = *this + o; }
    Magnitude& operator*=(const Magnitude& o) { return *this = *this * o; }

    friend bool operator==(const Magnitude& a, const Magnitude& b) {
        if (a.is_log_ == b.is_log_) return a.value_ == b.value_;
        return a.log2() == b.log2();
    }

    friend std::partial_ordering operator<=>(const Magnitude& a, const Magnitude& b) {
        if (!a.is_log_ && !b.is_log_) return a.value_ <=> b.value_;
        return a.log2() <=> b.log2();
    }

    friend std::ostream& operator<<(std::ostream& os, const Magnitude& m) {
        if (m.is_log_) return os << "2^" << m.value_;
        return os << m.value_;
    }

private:
    double value_ = 0.0;
    bool is_log_ = false;
};

[[nodiscard]] inline Magnitude min(const Magnitude& a, const Magnitude& b) { return b < a ? b : a; }

/// |a-b| / max(|a|,|b|) evaluated in the representation both values share.
[[nodiscard]] inline double relative_error(const Magnitude& a, const Magnitude& b) {
    if (!a.is_log() && !b.is_log()) {
        double scale = std::max(std::abs(a.linear()), std::abs(b.linear()));
        return scale == 0.0 ? 0.0 : std::abs(a.linear() - b.linear()) / scale;
    }
    // ratio 2^(la-lb); relative error = |1 - 2^-(|la-lb|)|
    double d = std::abs(a.log2() - b.log2());
    return -std::expm1(-d * std::log(2.0));
}

}  // namespace cep
