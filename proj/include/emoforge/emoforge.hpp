#pragma once

#include "emoforge/adam.hpp"
#include "emoforge/autodiff.hpp"
#include "emoforge/checkpoint.hpp"
#include "emoforge/datagen.hpp"
#include "emoforge/dsp.hpp"
#include "emoforge/emi_condition.hpp"
#include "emoforge/ep_align.hpp"
#include "emoforge/error.hpp"
#include "emoforge/matrix.hpp"
#include "emoforge/metrics.hpp"
#include "emoforge/model.hpp"
#include "emoforge/rng.hpp"
#include "emoforge/synth.hpp"
#include "emoforge/vocab.hpp"
#include "emoforge/wav.hpp"
