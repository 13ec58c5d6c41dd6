#include <cmath>

#include "doctest.h"
#include "flowmob/model.hpp"
#include "helpers.hpp"

using namespace flowmob;

namespace {

ModelDims small_dims(bool spatial = true) {
  ModelDims d;
  d.embed_dim = 5;
  d.hidden_dim = 6;
  d.num_categories = 4;
  d.num_clusters = 3;
  d.spatial = spatial;
  return d;
}

}  // namespace

TEST_CASE("embedding") {
  ModelParams p = ModelParams::zeros(small_dims());
  CHECK(embed_event(p, 2, 0.3, 4.0).isZero());

  p.embed.b_v.setConstant(0.25);
  CHECK(embed_event(p, 1, 0.9, 2.0).isApproxToConstant(0.25));

  p.embed.b_v.setZero();
  p.embed.W_c(0, 2) = 1.0;
  p.embed.w_t(1) = 1.0;
  const Eigen::VectorXd v = embed_event(p, 2, 0.5, 0.0);
  CHECK(v(0) == 1.0);
  CHECK(v(1) == 0.5);
  CHECK(v.tail(3).isZero());

  CHECK_THROWS_AS(embed_event(p, 4, 0.1, 0.1), Error);
  CHECK_THROWS_AS(embed_event(p, -1, 0.1, 0.1), Error);
}

TEST_CASE("recurrent step") {
  ModelParams p = ModelParams::zeros(small_dims());
  const Eigen::VectorXd zero_s = Eigen::VectorXd::Zero(6), v = Eigen::VectorXd::Ones(5);
  CHECK(rnn_step(p, zero_s, v, 0.4, 1.0).isZero());
  p.rnn.b_s.setConstant(0.7);
  CHECK(rnn_step(p, zero_s, v, 0.4, 1.0).isApproxToConstant(std::tanh(0.7)));
}

TEST_CASE("fusion") {
  ModelParams p = ModelParams::zeros(small_dims());
  Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(6, 0.1, 0.6);
  p.fuse.w_f.setOnes();
  CHECK(fuse(p, s, 3.0) == s);  // alpha = 0
  p.fuse.alpha = 2.0;
  p.fuse.w_f.setZero();
  CHECK(fuse(p, s, 3.0) == s);

  p.fuse.alpha = 1.0;
  p.fuse.w_f(2) = 1.0;
  const Eigen::VectorXd out = fuse(p, Eigen::VectorXd::Zero(6), 2.5);
  CHECK(out(2) == 2.5);
  CHECK(out.sum() == 2.5);

  CHECK(&fusion_head(p) == &*p.d_flow);
  ModelParams flat = ModelParams::zeros(small_dims(false));
  CHECK(&fusion_head(flat) == &flat.t_flow);
}

TEST_CASE("mark distribution") {
  ModelParams p = ModelParams::zeros(small_dims());
  const Eigen::VectorXd s = Eigen::VectorXd::Constant(6, 0.3);
  CHECK(mark_log_probs(p, s).array().exp().isApproxToConstant(0.25));

  ModelDims two = small_dims();
  two.num_categories = 2;
  ModelParams q = ModelParams::zeros(two);
  q.mark.b_c << 1.0, 0.0;
  const Eigen::VectorXd probs = mark_log_probs(q, s).array().exp();
  CHECK(probs(0) == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(probs(1) == doctest::Approx(0.268941).epsilon(1e-6));

  q.mark.b_c.array() += 17.0;
  const Eigen::VectorXd shifted = mark_log_probs(q, s).array().exp();
  CHECK(shifted(0) == doctest::Approx(probs(0)).epsilon(1e-12));
}

TEST_CASE("zero model sequence likelihood") {
  ModelParams p = ModelParams::zeros(small_dims());
  // events 0 and 1, one unit apart in time and distance; one scored step
  Sequence seq = testing::make_sequence("u", {0, 3}, {0.0, 1.0}, {0.0, 1.0});
  const NllResult r = sequence_nll(p, seq, ScoreRange::train);
  CHECK(r.steps == 1);
  CHECK_FALSE(r.empty);
  CHECK(r.trace.steps[0].nll.mark == doctest::Approx(std::log(4.0)));
  // -log_pdf(mu = 0, sigma2 = ln 2 + 1e-4, x = 1) = ln(sigma2)/2 + ln(2 pi)/2
  const double flow_term = 0.5 * std::log(std::log(2.0) + kSigmaFloor) + 0.5 * std::log(2.0 * M_PI);
  CHECK(flow_term == doctest::Approx(0.735754).epsilon(1e-6));
  CHECK(r.trace.steps[0].nll.time == doctest::Approx(flow_term).epsilon(1e-12));
  CHECK(r.trace.steps[0].nll.dist == doctest::Approx(flow_term).epsilon(1e-12));
  CHECK(r.total == doctest::Approx(std::log(4.0) + 2.0 * flow_term).epsilon(1e-12));

  const NllResult test = sequence_nll(p, seq, ScoreRange::test);
  CHECK(test.empty);
  CHECK(test.total == 0.0);
}

TEST_CASE("all-range likelihood is the sum of train and test parts") {
  const ModelParams p = init_params(small_dims(), 11);
  Sequence seq = testing::make_sequence("u", {0, 1, 2, 3, 2, 1, 0, 1, 3, 2},
                                        {0.0, 0.05, 0.1, 0.2, 0.25, 0.3, 0.45, 0.5, 0.6, 0.61},
                                        {0, 1, 1.5, 3, 3, 4, 6, 6.1, 7, 9});
  seq.cluster = 2;
  const NllResult all = sequence_nll(p, seq, ScoreRange::all);
  const NllResult train = sequence_nll(p, seq, ScoreRange::train);
  const NllResult test = sequence_nll(p, seq, ScoreRange::test);
  CHECK(all.total == all.train_part + all.test_part);
  CHECK(all.train_part == doctest::Approx(train.total).epsilon(1e-13));
  CHECK(all.test_part == doctest::Approx(test.total).epsilon(1e-13));
  CHECK(all.steps == 9);
  CHECK(train.steps == 7);
  CHECK(test.steps == 2);

  // sample-mode fusion sees the same draw at a step regardless of range
  const FusionPolicy sampled{PointMode::sample, 5};
  const NllResult a = sequence_nll(p, seq, ScoreRange::all, sampled);
  const NllResult t = sequence_nll(p, seq, ScoreRange::test, sampled);
  CHECK(a.test_part == doctest::Approx(t.total).epsilon(1e-13));
}

TEST_CASE("routing requires a valid cluster") {
  const ModelParams p = init_params(small_dims(), 1);
  Sequence seq = testing::make_sequence("u", {0, 1, 2}, {0.0, 0.1, 0.2});
  seq.cluster = -1;
  CHECK_THROWS_AS(sequence_nll(p, seq, ScoreRange::train), Error);
  seq.cluster = 3;
  CHECK_THROWS_AS(sequence_nll(p, seq, ScoreRange::train), Error);
}

TEST_CASE("initialisation") {
  const ModelParams a = init_params(small_dims(), 3), b = init_params(small_dims(), 3);
  CHECK(a.rnn.G_s == b.rnn.G_s);
  CHECK(a.rnn.b_s.isZero());
  CHECK(a.mark.b_c.isZero());
  // fan-in of the recurrence is H + D + 2 scalar inputs
  CHECK(a.rnn.G_s.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(13.0));
  CHECK(a.rnn.g_d.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(13.0));
  CHECK(a.embed.w_d.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(6.0));
  const ModelParams c = init_params(small_dims(), 4);
  CHECK(a.rnn.G_s != c.rnn.G_s);

  const ModelParams flat = init_params(small_dims(false), 3);
  CHECK_FALSE(flat.spatial());
  CHECK(flat.embed.w_d.size() == 0);
  CHECK(parameter_count(flat) < parameter_count(a));
  bool saw_spatial = false;
  for_each_tensor(flat, [&](const auto& t) {
    saw_spatial |= t.name.find("w_d") != std::string_view::npos ||
                   t.name.find("g_d") != std::string_view::npos ||
                   t.name.rfind("d_flow", 0) == 0;
  });
  CHECK_FALSE(saw_spatial);
}
