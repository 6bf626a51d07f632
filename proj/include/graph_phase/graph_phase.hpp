#pragma once

#include "graph_phase/error.hpp"
#include "graph_phase/graph.hpp"
#include "graph_phase/multi_class.hpp"
#include "graph_phase/oracles.hpp"
#include "graph_phase/random_instances.hpp"
#include "graph_phase/trajectory.hpp"
#include "graph_phase/two_class.hpp"
