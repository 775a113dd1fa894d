#pragma once

#include "fovgrid/analysis.hpp"
#include "fovgrid/baselines.hpp"
#include "fovgrid/cmf.hpp"
#include "fovgrid/geometry.hpp"
#include "fovgrid/image_io.hpp"
#include "fovgrid/io.hpp"
#include "fovgrid/kernel_map.hpp"
#include "fovgrid/neighborhoods.hpp"
#include "fovgrid/plot.hpp"
#include "fovgrid/resampler.hpp"
#include "fovgrid/sampler.hpp"
#include "fovgrid/signal.hpp"
