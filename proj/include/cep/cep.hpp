#pragma once

// Umbrella header for the whole library.

#include "cep/error.hpp"
#include "cep/magnitude.hpp"
#include "cep/pattern.hpp"
#include "cep/statistics.hpp"
#include "cep/parser.hpp"
#include "cep/plan.hpp"
#include "cep/transform.hpp"
#include "cep/cost.hpp"
#include "cep/plangen.hpp"
#include "cep/runtime/engine.hpp"
#include "cep/oracle.hpp"
#include "cep/stream.hpp"
#include "cep/bench.hpp"
