#pragma once

// Umbrella header.

#include "pvcg/errors.hpp"
#include "pvcg/market_model.hpp"
#include "pvcg/simplex_qp.hpp"
#include "pvcg/allocation.hpp"
#include "pvcg/vcg_pricing.hpp"
#include "pvcg/verification.hpp"
#include "pvcg/io.hpp"
