#pragma once

#include "ahsl/anatomy.hpp"
#include "ahsl/edt.hpp"
#include "ahsl/error.hpp"
#include "ahsl/losses.hpp"
#include "ahsl/metrics.hpp"
#include "ahsl/optimizer.hpp"
#include "ahsl/parallel.hpp"
#include "ahsl/phantom.hpp"
#include "ahsl/rng.hpp"
#include "ahsl/svol.hpp"
#include "ahsl/volume.hpp"
