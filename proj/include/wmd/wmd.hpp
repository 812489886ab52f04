#pragma once

#include "wmd/error.hpp"
#include "wmd/core.hpp"
#include "wmd/rng.hpp"
#include "wmd/keying.hpp"
#include "wmd/generation.hpp"
#include "wmd/statistics.hpp"
#include "wmd/quadrature.hpp"
#include "wmd/optimize.hpp"
#include "wmd/normal.hpp"
#include "wmd/calibration.hpp"
#include "wmd/detection.hpp"
#include "wmd/experiments.hpp"
#include "wmd/tokenfile.hpp"
