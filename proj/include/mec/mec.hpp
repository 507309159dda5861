#pragma once

/// Umbrella header for the minimum-entropy coupling toolkit.

#include "mec/baselines.hpp"
#include "mec/dpcore.hpp"
#include "mec/grid.hpp"
#include "mec/io.hpp"
#include "mec/mass.hpp"
#include "mec/model.hpp"
#include "mec/oracle.hpp"
#include "mec/preprocess.hpp"
#include "mec/reconstruct.hpp"
#include "mec/theorem_params.hpp"
