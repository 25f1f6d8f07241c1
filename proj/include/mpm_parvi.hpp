#pragma once

// Umbrella header.

#include "mpm_parvi/constitutive.hpp"
#include "mpm_parvi/diag.hpp"
#include "mpm_parvi/errors.hpp"
#include "mpm_parvi/grid.hpp"
#include "mpm_parvi/interp.hpp"
#include "mpm_parvi/io.hpp"
#include "mpm_parvi/log.hpp"
#include "mpm_parvi/parallel.hpp"
#include "mpm_parvi/sampler.hpp"
#include "mpm_parvi/target.hpp"
#include "mpm_parvi/tensor.hpp"
#include "mpm_parvi/transfer.hpp"
