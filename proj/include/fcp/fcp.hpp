#pragma once

#include "fcp/errors.hpp"
#include "fcp/freecat.hpp"
#include "fcp/inference.hpp"
#include "fcp/matrix.hpp"
#include "fcp/policy.hpp"
#include "fcp/quiver.hpp"
#include "fcp/random.hpp"
#include "fcp/sampler.hpp"
#include "fcp/semantics.hpp"
#include "fcp/stats.hpp"
#include "fcp/wiring.hpp"
