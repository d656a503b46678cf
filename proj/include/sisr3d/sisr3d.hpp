#pragma once

#include "sisr3d/error.hpp"
#include "sisr3d/interp.hpp"
#include "sisr3d/voxio.hpp"
#include "sisr3d/degrade.hpp"
#include "sisr3d/autograd.hpp"
#include "sisr3d/zoo.hpp"
#include "sisr3d/train.hpp"
#include "sisr3d/metrics.hpp"
#include "sisr3d/stats.hpp"
#include "sisr3d/bench.hpp"
