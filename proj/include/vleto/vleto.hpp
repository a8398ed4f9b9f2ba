#pragma once

// Umbrella header for the vertical federated continual learning library.

#include "vleto/checkpoint.hpp"
#include "vleto/continual.hpp"
#include "vleto/data.hpp"
#include "vleto/errors.hpp"
#include "vleto/experiment.hpp"
#include "vleto/matrix.hpp"
#include "vleto/metrics.hpp"
#include "vleto/nn.hpp"
#include "vleto/prototypes.hpp"
#include "vleto/protocol.hpp"
#include "vleto/rng.hpp"
#include "vleto/tasks.hpp"
