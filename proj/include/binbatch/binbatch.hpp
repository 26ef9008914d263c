#pragma once
// Umbrella header for the binbatch library.

#include "binbatch/analytics.hpp"
#include "binbatch/binning.hpp"
#include "binbatch/experiment.hpp"
#include "binbatch/rng.hpp"
#include "binbatch/service_dist.hpp"
#include "binbatch/simulator.hpp"
#include "binbatch/workload.hpp"
