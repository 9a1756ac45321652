#pragma once

// Umbrella header for the one-shot federated learning simulator.

#include "fgl/config.hpp"
#include "fgl/core.hpp"
#include "fgl/dataset.hpp"
#include "fgl/fed.hpp"
#include "fgl/idx.hpp"
#include "fgl/metrics.hpp"
#include "fgl/netsim.hpp"
#include "fgl/network.hpp"
#include "fgl/optimizer.hpp"
#include "fgl/partition.hpp"
#include "fgl/prompts.hpp"
#include "fgl/synth.hpp"
#include "fgl/tensor.hpp"
