#pragma once

// Umbrella header.

#include "abslope/csv.hpp"
#include "abslope/math.hpp"
#include "abslope/model_io.hpp"
#include "abslope/predict.hpp"
#include "abslope/rng.hpp"
#include "abslope/saem.hpp"
#include "abslope/sampler.hpp"
#include "abslope/simulate.hpp"
#include "abslope/slobe.hpp"
#include "abslope/slope.hpp"
#include "abslope/standardize.hpp"
#include "abslope/types.hpp"
