#ifndef SMADMM_SMADMM_HPP
#define SMADMM_SMADMM_HPP

#include "baselines.hpp"
#include "common.hpp"
#include "estimator.hpp"
#include "experiment.hpp"
#include "kkt.hpp"
#include "linops.hpp"
#include "oracle.hpp"
#include "pnp.hpp"
#include "problem.hpp"
#include "problems.hpp"
#include "prox.hpp"
#include "schedules.hpp"
#include "solver.hpp"
#include "trace.hpp"

#endif  // SMADMM_SMADMM_HPP
