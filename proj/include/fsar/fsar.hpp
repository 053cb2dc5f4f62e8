#pragma once

// Umbrella header.

#include "fsar/core.hpp"
#include "fsar/autodiff.hpp"
#include "fsar/data.hpp"
#include "fsar/encoders.hpp"
#include "fsar/metrics.hpp"
#include "fsar/modulation.hpp"
#include "fsar/objectives.hpp"
#include "fsar/config.hpp"
#include "fsar/model.hpp"
#include "fsar/train.hpp"
#include "fsar/evaluate.hpp"
#include "fsar/checkpoint.hpp"
#include "fsar/export.hpp"
