#pragma once
// Umbrella header.

#include "abcde.hpp"
#include "attention.hpp"
#include "error.hpp"
#include "fastcav.hpp"
#include "grid.hpp"
#include "imgio.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "segmentation.hpp"
#include "uncertainty.hpp"
