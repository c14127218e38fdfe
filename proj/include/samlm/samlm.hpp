#pragma once

#include "samlm/attention.hpp"
#include "samlm/checkpoint.hpp"
#include "samlm/corpus.hpp"
#include "samlm/eval.hpp"
#include "samlm/genapp.hpp"
#include "samlm/gru.hpp"
#include "samlm/lda.hpp"
#include "samlm/model.hpp"
#include "samlm/model_io.hpp"
#include "samlm/ngram.hpp"
#include "samlm/random.hpp"
#include "samlm/tensor.hpp"
#include "samlm/trainer.hpp"
