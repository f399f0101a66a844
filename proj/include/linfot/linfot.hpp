#pragma once

#include "linfot/blockapprox.hpp"
#include "linfot/bottleneck.hpp"
#include "linfot/harness.hpp"
#include "linfot/io.hpp"
#include "linfot/measures.hpp"
#include "linfot/monotonicity.hpp"
#include "linfot/sinkhorn.hpp"
#include "linfot/svg.hpp"
