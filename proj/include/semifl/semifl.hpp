#pragma once

#include "semifl/checkpoint.hpp"
#include "semifl/clustering.hpp"
#include "semifl/config.hpp"
#include "semifl/dataset.hpp"
#include "semifl/errors.hpp"
#include "semifl/experiment.hpp"
#include "semifl/federation.hpp"
#include "semifl/metrics.hpp"
#include "semifl/model.hpp"
#include "semifl/nn.hpp"
#include "semifl/rng.hpp"
#include "semifl/tensor.hpp"
