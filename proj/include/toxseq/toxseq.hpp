#pragma once

#include "toxseq/checkpoint.hpp"
#include "toxseq/cli.hpp"
#include "toxseq/config.hpp"
#include "toxseq/dataset.hpp"
#include "toxseq/encoder.hpp"
#include "toxseq/error.hpp"
#include "toxseq/grad_check.hpp"
#include "toxseq/head.hpp"
#include "toxseq/metrics.hpp"
#include "toxseq/mlm.hpp"
#include "toxseq/model.hpp"
#include "toxseq/ops.hpp"
#include "toxseq/optim.hpp"
#include "toxseq/pretrain.hpp"
#include "toxseq/report.hpp"
#include "toxseq/rng.hpp"
#include "toxseq/tensor.hpp"
#include "toxseq/text.hpp"
#include "toxseq/tfidf.hpp"
#include "toxseq/training.hpp"
