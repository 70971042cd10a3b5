#pragma once

#include "emopt/family.hpp"
#include "emopt/mm.hpp"
#include "emopt/natgrad.hpp"
#include "emopt/numerics.hpp"
#include "emopt/oracle.hpp"
#include "emopt/polynomial.hpp"
#include "emopt/problem_io.hpp"
#include "emopt/quadratic.hpp"
#include "emopt/rebase.hpp"
#include "emopt/solve.hpp"
#include "emopt/types.hpp"
