#pragma once

#include "destim/harness.hpp"
#include "destim/inner_dist.hpp"
#include "destim/models.hpp"
#include "destim/protocol.hpp"
#include "destim/regimes.hpp"
#include "destim/rng.hpp"
#include "destim/sieve.hpp"
#include "destim/stats.hpp"
#include "destim/svg.hpp"
#include "destim/wavelet.hpp"
