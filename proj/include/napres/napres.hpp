// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <napres/audio.hpp>
#include <napres/error.hpp>
#include <napres/formant.hpp>
#include <napres/grid.hpp>
#include <napres/harness.hpp>
#include <napres/plot.hpp>
#include <napres/pulse.hpp>
#include <napres/reassign.hpp>
#include <napres/spectral.hpp>
