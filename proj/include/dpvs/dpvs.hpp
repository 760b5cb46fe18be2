#pragma once

#include "dpvs/config.hpp"
#include "dpvs/dataset.hpp"
#include "dpvs/experiment.hpp"
#include "dpvs/ledger.hpp"
#include "dpvs/metrics.hpp"
#include "dpvs/model.hpp"
#include "dpvs/pruner.hpp"
#include "dpvs/rng.hpp"
#include "dpvs/shapley.hpp"
