#pragma once

#include "collact/classifiers.hpp"
#include "collact/clustering.hpp"
#include "collact/collectives.hpp"
#include "collact/config.hpp"
#include "collact/datasets.hpp"
#include "collact/error.hpp"
#include "collact/format.hpp"
#include "collact/harness.hpp"
#include "collact/metrics.hpp"
#include "collact/recsys.hpp"
#include "collact/report.hpp"
#include "collact/rng.hpp"
