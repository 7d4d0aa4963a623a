#pragma once

// Everything except the HTTP service, which lives in tlt/service.hpp so
// that library consumers do not pull in the server dependency.

#include "tlt/errors.hpp"
#include "tlt/trajectory.hpp"
#include "tlt/classifier.hpp"
#include "tlt/tokenizer.hpp"
#include "tlt/key_tokens.hpp"
#include "tlt/loss.hpp"
#include "tlt/reward.hpp"
#include "tlt/evaluator.hpp"
#include "tlt/ppo.hpp"
#include "tlt/config.hpp"
