#pragma once

#include "plumetrace/calibration.hpp"
#include "plumetrace/config.hpp"
#include "plumetrace/errors.hpp"
#include "plumetrace/fem_assembly.hpp"
#include "plumetrace/geometry.hpp"
#include "plumetrace/io/csv.hpp"
#include "plumetrace/io/vtk.hpp"
#include "plumetrace/mesh.hpp"
#include "plumetrace/nn_lasso.hpp"
#include "plumetrace/parallel.hpp"
#include "plumetrace/pdap.hpp"
#include "plumetrace/scenario.hpp"
#include "plumetrace/sensing.hpp"
#include "plumetrace/source_model.hpp"
#include "plumetrace/stack.hpp"
#include "plumetrace/transport.hpp"
#include "plumetrace/wind.hpp"
