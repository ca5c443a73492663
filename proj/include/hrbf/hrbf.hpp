#pragma once

#include "hrbf/bench_noise.hpp"
#include "hrbf/center_select.hpp"
#include "hrbf/csrbf_kernel.hpp"
#include "hrbf/hrbf_exact.hpp"
#include "hrbf/hrbf_quasi.hpp"
#include "hrbf/implicit_field.hpp"
#include "hrbf/isosurface_dc.hpp"
#include "hrbf/mesh_topology.hpp"
#include "hrbf/parallel.hpp"
#include "hrbf/pipeline.hpp"
#include "hrbf/pointcloud_io.hpp"
#include "hrbf/shapes.hpp"
#include "hrbf/spatial_index.hpp"
#include "hrbf/types.hpp"
