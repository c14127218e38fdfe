#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "samlm/trainer.hpp"
#include "support/pipeline.hpp"
#include "support/synthetic.hpp"

using namespace samlm;

namespace {

Document text_doc(const std::string& id, const std::string& text) {
  Document d;
  d.id = id;
  d.text = tokenize(text);
  return d;
}

}  // namespace

TEST(Adam, QuadraticConvergesAndMatchesScalarRecursion) {
  ParamStore store;
  store.add("theta", Mat::column({1.0, -2.0, 0.5}));
  AdamState state;
  // Independent scalar recursion for coordinate 0.
  double theta = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 500; ++t) {
    store.grad(0) += store.value(0);  // d/dtheta of |theta|^2 / 2
    adam_step(store, state, 0.01);
    const double g = theta;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta -= 0.01 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    ASSERT_NEAR(store.value(0)[0], theta, 1e-12);
  }
  // Constant-rate Adam settles into a band of a few step sizes around the optimum.
  for (double x : store.value(0).data()) EXPECT_LT(std::abs(x), 5 * 0.01);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamStore store;
  store.add("w", Mat::column({0.3, -0.7}));
  AdamState state;
  for (int i = 0; i < 10; ++i) adam_step(store, state, 0.1);
  EXPECT_EQ(store.value(0), Mat::column({0.3, -0.7}));
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  ParamStore store;
  store.add("w", Mat::column({0.0, 0.0, 0.0}));
  store.grad(0) = Mat::column({3.0, -0.002, 50.0});
  AdamState state;
  adam_step(store, state, 0.01);
  EXPECT_NEAR(store.value(0)[0], -0.01, 1e-9);
  EXPECT_NEAR(store.value(0)[1], 0.01, 1e-6);
  EXPECT_NEAR(store.value(0)[2], -0.01, 1e-9);
  EXPECT_EQ(store.grad(0), Mat(3, 1));
}

TEST(Adam, NonFiniteGradientNamesTensor) {
  ParamStore store;
  store.add("ok", Mat(1, 1));
  store.add("bad", Mat(2, 1));
  store.grad(1)[1] = std::nan("");
  AdamState state;
  try {
    adam_step(store, state, 0.01);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'bad'"), std::string::npos);
  }
}

TEST(Clip, GlobalNormIsBounded) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Grads g{Mat(3, 2), Mat(4, 1)};
    for (auto& m : g) {
      for (double& x : m.data()) x = rng.uniform(-10.0, 10.0);
    }
    const double before = global_grad_norm(g);
    const Grads original = g;
    const double reported = clip_grad_norm(g, 5.0);
    EXPECT_EQ(reported, before);
    EXPECT_LE(global_grad_norm(g), 5.0 + 1e-9);
    if (before <= 5.0) {
      EXPECT_EQ(g, original);
    }
  }
}

TEST(Batches, CoverEveryDocumentOnce) {
  const auto docs = synthetic::category_corpus(137, 4, 1);
  const auto data = pipeline::index_splits(docs, docs, docs);
  Rng rng(2);
  const auto batches = make_batches(data.train, 20, rng);
  std::vector<int> seen(137, 0);
  for (const auto& b : batches) {
    EXPECT_LE(b.size(), 20u);
    for (std::size_t i : b) ++seen[i];
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Train, EarlyStopsAfterPatience) {
  const std::vector<Document> train_docs{text_doc("t", "a a a a")};
  const std::vector<Document> valid_docs{text_doc("v", "b b b b")};
  auto data = pipeline::index_splits(train_docs, valid_docs, valid_docs);
  // "b" is out of the training vocabulary; give it an id anyway so the
  // validation loss can rise as the model learns "a".
  data.vocab.push("b");
  data.valid = index_documents(valid_docs, data.vocab, data.attrs);
  auto model = build_model(pipeline::config_for(Variant::Rnn, data, 8, 8));
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.patience = 1;
  cfg.max_epochs = 50;
  const auto result = train(model, data.train, data.valid, cfg);
  ASSERT_EQ(result.history.size(), 2u);
  EXPECT_EQ(result.best_epoch, 1u);
  EXPECT_GT(result.history[1].valid_ppl, result.history[0].valid_ppl);
  EXPECT_EQ(model.params.values(), result.best_values);
}

TEST(Train, MemorizesSingleDocument) {
  const std::vector<Document> docs{text_doc("m", "the cat sat on the mat")};
  const auto data = pipeline::index_splits(docs, docs, docs);
  auto model = build_model(pipeline::config_for(Variant::Rnn, data, 16, 16));
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  train(model, data.train, data.valid, cfg);
  EXPECT_LE(perplexity(model, data.train).perplexity, 1.05);
}

TEST(Train, CategoryConditioningBeatsPlainRnn) {
  const auto docs = synthetic::category_corpus(500, 3, 5);
  const std::vector<Document> train_docs(docs.begin(), docs.begin() + 400), valid_docs(docs.begin() + 400, docs.end());
  const auto data = pipeline::index_splits(train_docs, valid_docs, valid_docs);
  TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.max_epochs = 15;
  auto rnn = build_model(pipeline::config_for(Variant::Rnn, data, 12, 8));
  auto cat = build_model(pipeline::config_for(Variant::SamCat, data, 12, 8));
  const auto r = train(rnn, data.train, data.valid, cfg);
  const auto c = train(cat, data.train, data.valid, cfg);
  EXPECT_LT(c.best_valid_ppl(), r.best_valid_ppl());
}

TEST(Train, ReproducibleUnderSeeds) {
  const auto docs = synthetic::author_corpus(60, 4, 2);
  const auto data = pipeline::index_splits(docs, docs, docs);
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.max_epochs = 3;
  auto a = build_model(pipeline::config_for(Variant::SamTitleAuAtt, data, 6, 5, 7));
  auto b = build_model(pipeline::config_for(Variant::SamTitleAuAtt, data, 6, 5, 7));
  const auto ra = train(a, data.train, data.valid, cfg);
  const auto rb = train(b, data.train, data.valid, cfg);
  ASSERT_EQ(ra.history.size(), rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    EXPECT_EQ(ra.history[i].train_ppl, rb.history[i].train_ppl);
    EXPECT_EQ(ra.history[i].valid_ppl, rb.history[i].valid_ppl);
  }
  EXPECT_EQ(a.params.values(), b.params.values());
}

TEST(Train, BestPerplexityIsMinimumOfHistory) {
  const auto docs = synthetic::category_corpus(80, 3, 9);
  const auto data = pipeline::index_splits(docs, docs, docs);
  auto model = build_model(pipeline::config_for(Variant::SamCat, data, 6, 4));
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.max_epochs = 6;
  const auto r = train(model, data.train, data.valid, cfg);
  double best = r.history.front().valid_ppl;
  for (const auto& rec : r.history) best = std::min(best, rec.valid_ppl);
  EXPECT_NEAR(r.best_valid_ppl(), best, 1e-9 * best);
  EXPECT_NEAR(perplexity(model, data.valid).perplexity, best, 1e-9 * best);
}

TEST(Train, HistoryCsvHeader) {
  std::ostringstream out;
  write_history_csv(out, {{1, 10.0, 12.0, 0.5}});
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "epoch,train_ppl,valid_ppl,seconds");
}

TEST(Train, RejectsBadConfig) {
  TrainConfig cfg;
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.patience = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Train, ThreadedGradientsMatchSingleThread) {
  const auto docs = synthetic::author_corpus(30, 5, 4);
  const auto data = pipeline::index_splits(docs, docs, docs);
  auto a = build_model(pipeline::config_for(Variant::SamTitleAuAtt, data, 6, 5));
  auto b = a;
  std::vector<std::size_t> batch(30);
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  const auto ra = batch_gradients(a, data.train, batch, 1);
  const auto rb = batch_gradients(b, data.train, batch, 4);
  EXPECT_EQ(ra.second, rb.second);
  EXPECT_NEAR(ra.first, rb.first, 1e-9);
  for (ParamId id = 0; id < a.params.size(); ++id) {
    for (std::size_t i = 0; i < a.params.grad(id).size(); ++i) {
      EXPECT_NEAR(a.params.grad(id)[i], b.params.grad(id)[i], 1e-12);
    }
  }
}
