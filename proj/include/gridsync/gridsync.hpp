#pragma once

#include "gridsync/controllers.hpp"
#include "gridsync/dynamics.hpp"
#include "gridsync/grid.hpp"
#include "gridsync/io.hpp"
#include "gridsync/metrics.hpp"
#include "gridsync/scenario.hpp"
#include "gridsync/topology.hpp"
