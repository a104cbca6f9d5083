#pragma once

#include "agent_nets.hpp"
#include "experiment.hpp"
#include "learner.hpp"
#include "metrics.hpp"
#include "neural.hpp"
#include "oracle.hpp"
#include "relnet.hpp"
#include "replay.hpp"
#include "switch_env.hpp"
