#pragma once

#include "mrrce/baselines.hpp"
#include "mrrce/bench.hpp"
#include "mrrce/em.hpp"
#include "mrrce/evaluation.hpp"
#include "mrrce/glasso.hpp"
#include "mrrce/io.hpp"
#include "mrrce/model.hpp"
#include "mrrce/numerics.hpp"
#include "mrrce/simgen.hpp"
