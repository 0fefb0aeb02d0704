#pragma once

#include "gazesyn/conditioning.hpp"
#include "gazesyn/config.hpp"
#include "gazesyn/denoiser.hpp"
#include "gazesyn/diffusion.hpp"
#include "gazesyn/error.hpp"
#include "gazesyn/events.hpp"
#include "gazesyn/gan.hpp"
#include "gazesyn/nn.hpp"
#include "gazesyn/pipeline.hpp"
#include "gazesyn/quality.hpp"
#include "gazesyn/random.hpp"
#include "gazesyn/recording_io.hpp"
#include "gazesyn/signal.hpp"
#include "gazesyn/simulator.hpp"
#include "gazesyn/workflow.hpp"
