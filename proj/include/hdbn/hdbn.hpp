#pragma once

#include "hdbn/numerics.hpp"
#include "hdbn/dense.hpp"
#include "hdbn/optim.hpp"
#include "hdbn/binary_io.hpp"
#include "hdbn/dataset.hpp"
#include "hdbn/synth.hpp"
#include "hdbn/grouping.hpp"
#include "hdbn/mood_model.hpp"
#include "hdbn/emotion_led.hpp"
#include "hdbn/ranking.hpp"
#include "hdbn/recommender.hpp"
#include "hdbn/evaluation.hpp"
#include "hdbn/config.hpp"
#include "hdbn/pipeline.hpp"
