#pragma once

// Umbrella header.

#include "cbverify/ast.hpp"
#include "cbverify/check.hpp"
#include "cbverify/concrete.hpp"
#include "cbverify/engine.hpp"
#include "cbverify/expr.hpp"
#include "cbverify/parser.hpp"
#include "cbverify/protocols.hpp"
#include "cbverify/registry.hpp"
#include "cbverify/solver.hpp"
#include "cbverify/trace.hpp"
#include "cbverify/vm.hpp"
