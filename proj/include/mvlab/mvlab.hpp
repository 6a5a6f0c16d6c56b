#pragma once

#include "mvlab/analysis.hpp"
#include "mvlab/bounds.hpp"
#include "mvlab/dynamics.hpp"
#include "mvlab/error.hpp"
#include "mvlab/harness.hpp"
#include "mvlab/keyed_rng.hpp"
#include "mvlab/lipschitz_net.hpp"
#include "mvlab/measure.hpp"
#include "mvlab/model.hpp"
#include "mvlab/stats.hpp"
#include "mvlab/transport.hpp"
