#pragma once

#include "fiberfit/conductivity.hpp"
#include "fiberfit/eikonal.hpp"
#include "fiberfit/estimators.hpp"
#include "fiberfit/experiment.hpp"
#include "fiberfit/mesh.hpp"
#include "fiberfit/mesh_io.hpp"
#include "fiberfit/neural_field.hpp"
#include "fiberfit/sampling.hpp"
#include "fiberfit/tangent_basis.hpp"
#include "fiberfit/trainer.hpp"
#include "fiberfit/util.hpp"
