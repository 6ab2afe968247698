#pragma once

#include "eodeblur/error.hpp"
#include "eodeblur/memory.hpp"
#include "eodeblur/imagecore.hpp"
#include "eodeblur/io.hpp"
#include "eodeblur/fft.hpp"
#include "eodeblur/degrade.hpp"
#include "eodeblur/spectral.hpp"
#include "eodeblur/deconv.hpp"
#include "eodeblur/metrics.hpp"
#include "eodeblur/niqe.hpp"
#include "eodeblur/brisque.hpp"
#include "eodeblur/synth.hpp"
#include "eodeblur/config.hpp"
#include "eodeblur/neural/tensor.hpp"
#include "eodeblur/neural/mimo.hpp"
#include "eodeblur/neural/train.hpp"
#include "eodeblur/neural/weights_io.hpp"
#include "eodeblur/pipeline.hpp"
