#pragma once

// Umbrella header for the whole pipeline.

#include "kinit/annotation.hpp"
#include "kinit/audio_io.hpp"
#include "kinit/dataset.hpp"
#include "kinit/dsp.hpp"
#include "kinit/ekm.hpp"
#include "kinit/experiments.hpp"
#include "kinit/features.hpp"
#include "kinit/nn.hpp"
