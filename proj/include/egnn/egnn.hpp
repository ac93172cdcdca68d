#pragma once

// Umbrella header.

#include "egnn/architecture.hpp"
#include "egnn/config.hpp"
#include "egnn/error.hpp"
#include "egnn/gradcheck.hpp"
#include "egnn/graph.hpp"
#include "egnn/layers.hpp"
#include "egnn/model.hpp"
#include "egnn/optim.hpp"
#include "egnn/params.hpp"
#include "egnn/random_graphs.hpp"
#include "egnn/rng.hpp"
#include "egnn/synthetic.hpp"
#include "egnn/tensor.hpp"
#include "egnn/training.hpp"
#include "egnn/tu_format.hpp"
