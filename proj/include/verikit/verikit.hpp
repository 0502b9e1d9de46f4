#pragma once

#include "verikit/core_model.hpp"
#include "verikit/divergence.hpp"
#include "verikit/errors.hpp"
#include "verikit/evaluation.hpp"
#include "verikit/fusion.hpp"
#include "verikit/geometry.hpp"
#include "verikit/lime.hpp"
#include "verikit/metrics.hpp"
#include "verikit/protocol.hpp"
#include "verikit/report.hpp"
#include "verikit/synth.hpp"
