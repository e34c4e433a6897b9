#pragma once

#include "metalens/alignment.hpp"
#include "metalens/config.hpp"
#include "metalens/diffusion.hpp"
#include "metalens/error.hpp"
#include "metalens/filters.hpp"
#include "metalens/image.hpp"
#include "metalens/io.hpp"
#include "metalens/kernel_grid.hpp"
#include "metalens/manifest.hpp"
#include "metalens/measurement.hpp"
#include "metalens/metrics.hpp"
#include "metalens/pipeline.hpp"
#include "metalens/predeblur.hpp"
#include "metalens/psf_factory.hpp"
#include "metalens/pyramid.hpp"
#include "metalens/random.hpp"
#include "metalens/scene.hpp"
#include "metalens/sv_convolve.hpp"
#include "metalens/tone_map.hpp"
#include "metalens/transform.hpp"
