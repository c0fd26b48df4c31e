// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/backward.hpp"
#include "ever/bvh.hpp"
#include "ever/camera.hpp"
#include "ever/contraction.hpp"
#include "ever/epi.hpp"
#include "ever/geometry.hpp"
#include "ever/image_io.hpp"
#include "ever/loss.hpp"
#include "ever/math.hpp"
#include "ever/optimizer.hpp"
#include "ever/oracle.hpp"
#include "ever/parallel.hpp"
#include "ever/render.hpp"
#include "ever/scene.hpp"
#include "ever/scene_io.hpp"
#include "ever/splat.hpp"
#include "ever/synthetic.hpp"
#include "ever/verify.hpp"
