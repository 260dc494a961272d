#pragma once

#include "orf/bvn.hpp"
#include "orf/errors.hpp"
#include "orf/io.hpp"
#include "orf/mcem.hpp"
#include "orf/model.hpp"
#include "orf/mom.hpp"
#include "orf/normal.hpp"
#include "orf/quadrature.hpp"
#include "orf/rng.hpp"
#include "orf/scoring.hpp"
#include "orf/simulate.hpp"
#include "orf/study.hpp"
#include "orf/types.hpp"
