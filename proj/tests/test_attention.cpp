#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "doctest.h"
#include "sit/attention.hpp"
#include "sit/errors.hpp"
#include "sit/ops.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace sit;
using sit::testing::max_abs_diff;
using sit::testing::max_fd_error;
using sit::testing::random_tensor;
using namespace sit::oracle;

namespace {

struct Fixture {
  AttentionConfig cfg{2, 8, 10000.0};
  ParameterSet params;
  std::mt19937_64 rng{41};
  MultiHeadAttention mh = MultiHeadAttention::create(params, "att", 8, rng);
  Fixture() {
    // Non-zero biases so they are exercised.
    for (const auto& p : params.all()) {
      if (p.tensor.rank() == 1) {
        auto d = const_cast<Tensor&>(p.tensor).data();
        for (double& x : d) x = 0.2 * (2 * uniform_unit(rng) - 1);
      }
    }
  }
};

Vocabulary vocab(std::size_t inter) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < inter; ++i) v.push_back(std::string(1, char('a' + i)));
  return Vocabulary({"<pad>", "<sos>", "<eos>", "&", "!"}, v);
}

Sequence random_sequence(const Vocabulary& v, std::size_t len, std::mt19937_64& rng) {
  Sequence s(len);
  for (auto& t : s) t = static_cast<TokenId>(3 + uniform_index(rng, v.size() - 3));
  return s;
}

std::vector<std::size_t> random_perm(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

// Batch of random hidden states for random source sequences.
StreamBatch random_batch(const Vocabulary& v, std::size_t B, std::size_t d, std::mt19937_64& rng,
                         std::vector<Sequence>* out_seqs = nullptr) {
  std::vector<Sequence> xs;
  for (std::size_t b = 0; b < B; ++b) xs.push_back(random_sequence(v, 2 + uniform_index(rng, 6), rng));
  auto lay = std::make_shared<const StreamLayout>(source_layout(v, xs));
  if (out_seqs) *out_seqs = xs;
  return {random_tensor({lay->rows(), d}, rng), lay};
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS((AttentionConfig{3, 8}.validate()), ConfigError);
  CHECK_THROWS_AS((AttentionConfig{8, 8}.validate()), ConfigError);
  CHECK_NOTHROW((AttentionConfig{2, 8}.validate()));
}

TEST_CASE("rope properties") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({1, 8}, rng);
  std::vector<std::size_t> zero = {0};
  auto r0 = rope(x, zero, 4, 10000.0);
  CHECK(max_abs_diff(r0.data(), x.data()) == 0.0);

  auto y = random_tensor({6, 8}, rng);
  std::vector<std::size_t> pos = {0, 1, 2, 7, 30, 1000};
  auto ry = rope(y, pos, 4, 10000.0);
  for (std::size_t r = 0; r < 6; ++r) {
    double a = 0, b = 0;
    for (std::size_t c = 0; c < 8; ++c) {
      a += y.at(r, c) * y.at(r, c);
      b += ry.at(r, c) * ry.at(r, c);
    }
    CHECK(std::abs(std::sqrt(a) - std::sqrt(b)) <= 1e-12);
  }

  auto q = random_tensor({1, 8}, rng), k = random_tensor({1, 8}, rng);
  auto dot_at = [&](std::size_t m, std::size_t n) {
    std::vector<std::size_t> pm = {m}, pn = {n};
    auto a = rope(q, pm, 8, 10000.0), b = rope(k, pn, 8, 10000.0);
    double s = 0;
    for (std::size_t c = 0; c < 8; ++c) s += a.at(0, c) * b.at(0, c);
    return s;
  };
  for (std::size_t shift : {1u, 5u, 17u}) {
    CHECK(std::abs(dot_at(3, 1) - dot_at(3 + shift, 1 + shift)) <= 1e-9);
    CHECK(std::abs(dot_at(0, 6) - dot_at(shift, 6 + shift)) <= 1e-9);
  }

  std::vector<std::size_t> one = {0};
  CHECK_THROWS_AS(rope(random_tensor({1, 6}, rng), one, 3, 10000.0), ConfigError);

  auto g = random_tensor({6, 8}, rng, true);
  auto w = random_tensor({2, 8}, rng);
  CHECK(max_fd_error({g}, [&] { return ops::sum(ops::matmul_nt(rope(g, pos, 4, 10000.0), w)); }) <= 1e-6);
}

TEST_CASE("mha single-token and uniform-key cases") {
  Fixture f;
  // Identity projections with zero biases.
  for (const auto& p : f.params.all()) {
    auto d = const_cast<Tensor&>(p.tensor).data();
    std::fill(d.begin(), d.end(), 0.0);
    if (p.tensor.rank() == 2)
      for (std::size_t i = 0; i < 8; ++i) d[i * 8 + i] = 1.0;
  }
  auto x = random_tensor({1, 8}, f.rng);
  auto out = mha(f.mh, f.cfg, x, x, x, AttentionMask::padding(1, 1, 1));
  CHECK(max_abs_diff(out.output.data(), x.data()) <= 1e-15);

  // Zero key projection: all scores equal.
  std::fill(const_cast<Tensor&>(f.mh.wk).data().begin(), const_cast<Tensor&>(f.mh.wk).data().end(), 0.0);
  auto q = random_tensor({5, 8}, f.rng);
  auto u = mha(f.mh, f.cfg, q, q, q, AttentionMask::padding(5, 5, 5));
  for (double w : u.weights) CHECK(std::abs(w - 0.2) <= 1e-12);
}

TEST_CASE("mha matches the scalar-loop oracle") {
  Fixture f;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t lq = 1 + uniform_index(f.rng, 6), lk = 1 + uniform_index(f.rng, 6);
    auto q = random_tensor({lq, 8}, f.rng), kv = random_tensor({lk, 8}, f.rng);
    const auto mask = AttentionMask::padding(lq, lk, 1 + uniform_index(f.rng, lk));
    auto out = mha(f.mh, f.cfg, q, kv, kv, mask);
    CHECK(max_diff(out.output, mha_oracle(f.mh, f.cfg, to_mat(q), to_mat(kv), mask)) <= 1e-10);
  }
  auto x = random_tensor({4, 8}, f.rng);
  auto causal = AttentionMask::causal(4, 4);
  auto out = mha(f.mh, f.cfg, x, x, x, causal);
  CHECK(max_diff(out.output, mha_oracle(f.mh, f.cfg, to_mat(x), to_mat(x), causal)) <= 1e-10);
}

TEST_CASE("weights sum to one over unmasked keys and vanish elsewhere") {
  Fixture f;
  auto x = random_tensor({6, 8}, f.rng);
  auto mask = AttentionMask::causal(6, 5);
  auto out = mha(f.mh, f.cfg, x, x, x, mask);
  REQUIRE(out.weights.size() == 2 * 36);
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        const double w = out.weights[(h * 6 + i) * 6 + j];
        if (!mask.allows(i, j)) CHECK(w == 0.0);
        s += w;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("causal mask: future perturbation leaves earlier positions bit-identical") {
  Fixture f;
  auto x = random_tensor({6, 8}, f.rng);
  auto y = x.detach();
  for (std::size_t c = 0; c < 8; ++c) y.data()[4 * 8 + c] += 0.5;
  auto mask = AttentionMask::causal(6, 6);
  auto a = mha(f.mh, f.cfg, x, x, x, mask).output;
  auto b = mha(f.mh, f.cfg, y, y, y, mask).output;
  CHECK(std::memcmp(a.data().data(), b.data().data(), 4 * 8 * sizeof(double)) == 0);
  CHECK(max_abs_diff(a.data().subspan(32), b.data().subspan(32)) > 0.0);
}

TEST_CASE("all-masked query row is rejected") {
  Fixture f;
  auto x = random_tensor({2, 8}, f.rng);
  AttentionMask m = AttentionMask::padding(2, 2, 2);
  m.bits[2] = m.bits[3] = 0;
  CHECK_THROWS_AS(mha(f.mh, f.cfg, x, x, x, m), ContractError);
}

TEST_CASE("attention gradients match finite differences") {
  Fixture f;
  const auto v = vocab(4);
  std::vector<Sequence> xs;
  auto h = random_batch(v, 2, 8, f.rng, &xs);
  auto hidden = random_tensor(h.hidden.shape(), f.rng, true);
  StreamBatch hb{hidden, h.layout};
  auto masks = self_masks(*h.layout, true);
  auto w = random_tensor({3, 8}, f.rng);
  std::vector<Tensor> inputs = {hidden};
  for (const auto& p : f.params.all()) inputs.push_back(p.tensor);
  CHECK(max_fd_error(inputs, [&] {
          auto a = per_stream_attention(f.mh, f.cfg, hb, masks);
          auto b = aggregated_attention(f.mh, f.cfg, StreamBatch{a, h.layout}, masks);
          return ops::sum(ops::matmul_nt(b, w));
        }) <= 1e-5);
}

TEST_CASE("per-stream attention") {
  Fixture f;
  const auto v = vocab(5);

  // k = 1 equals plain self-attention.
  const std::vector<Sequence> one = {{3, 5, 4, 5, 3}};
  auto lay = std::make_shared<const StreamLayout>(source_layout(v, one));
  REQUIRE(lay->streams == 1);
  StreamBatch h{random_tensor({lay->rows(), 8}, f.rng), lay};
  auto masks = self_masks(*lay, false);
  auto ps = per_stream_attention(f.mh, f.cfg, h, masks);
  auto plain = mha(f.mh, f.cfg, h.hidden, h.hidden, h.hidden, (*masks)[0]).output;
  CHECK(max_abs_diff(ps.data(), plain.data()) == 0.0);

  // Duplicated stream content gives identical outputs.
  const std::vector<Sequence> two = {{5, 6, 3}};
  auto lay2 = std::make_shared<const StreamLayout>(source_layout(v, two));
  auto row = random_tensor({3, 8}, f.rng);
  std::vector<double> dup(row.data().begin(), row.data().end());
  dup.insert(dup.end(), row.data().begin(), row.data().end());
  auto out = per_stream_attention(f.mh, f.cfg, StreamBatch{Tensor({6, 8}, dup), lay2}, self_masks(*lay2, false));
  CHECK(std::memcmp(out.data().data(), out.data().data() + 24, 24 * sizeof(double)) == 0);

  // Permutation equivariance, bit-exact.
  for (int trial = 0; trial < 50; ++trial) {
    auto hb = random_batch(v, 1 + uniform_index(f.rng, 3), 8, f.rng);
    std::vector<std::vector<std::size_t>> perm;
    for (std::size_t b = 0; b < hb.layout->batch; ++b) perm.push_back(random_perm(hb.layout->active_count(b), f.rng));
    auto hp = permute_streams(hb, perm);
    auto m = self_masks(*hb.layout, trial % 2 == 0);
    auto a = per_stream_attention(f.mh, f.cfg, hb, m);
    auto b = per_stream_attention(f.mh, f.cfg, hp, m);
    auto ap = permute_streams(StreamBatch{a, hb.layout}, perm);
    CHECK(std::memcmp(ap.hidden.data().data(), b.data().data(), b.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("inactive streams influence no output") {
  Fixture f;
  const auto v = vocab(5);
  const std::vector<Sequence> xs = {{5, 6, 7}, {8, 8}};
  auto lay = std::make_shared<const StreamLayout>(source_layout(v, xs));
  REQUIRE(lay->streams == 3);
  REQUIRE(lay->active_count(1) == 1);
  auto hidden = random_tensor({lay->rows(), 8}, f.rng);
  auto poked = hidden.detach();
  for (std::size_t s = 1; s < 3; ++s)
    for (std::size_t l = 0; l < lay->length; ++l)
      for (std::size_t c = 0; c < 8; ++c) poked.data()[lay->row(1, s, l) * 8 + c] = 100.0 + c;
  auto m = self_masks(*lay, false);
  auto a = aggregated_attention(f.mh, f.cfg, StreamBatch{hidden, lay}, m);
  auto b = aggregated_attention(f.mh, f.cfg, StreamBatch{poked, lay}, m);
  CHECK(max_abs_diff(a.data(), b.data()) == 0.0);
  auto c = per_stream_attention(f.mh, f.cfg, StreamBatch{hidden, lay}, m);
  auto d = per_stream_attention(f.mh, f.cfg, StreamBatch{poked, lay}, m);
  CHECK(max_abs_diff(c.data(), d.data()) == 0.0);
}

TEST_CASE("aggregated attention") {
  Fixture f;
  const auto v = vocab(5);
  const std::vector<Sequence> one = {{3, 6, 6, 4}};
  auto lay = std::make_shared<const StreamLayout>(source_layout(v, one));
  REQUIRE(lay->streams == 1);
  StreamBatch h{random_tensor({lay->rows(), 8}, f.rng), lay};
  auto masks = self_masks(*lay, false);
  CHECK(max_abs_diff(aggregated_attention(f.mh, f.cfg, h, masks).data(),
                     per_stream_attention(f.mh, f.cfg, h, masks).data()) == 0.0);

  // Every stream of a sequence reads the same key/value group.
  auto hb = random_batch(v, 3, 8, f.rng);
  auto plan = aggregated_plan(*hb.layout, self_masks(*hb.layout, false));
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t s = 0; s < hb.layout->streams; ++s) CHECK(plan.kv_group[b * hb.layout->streams + s] == b);

  // Oracle: stream s's queries against aggregate(h) as keys.
  auto g = aggregate(hb);
  auto out = aggregated_attention(f.mh, f.cfg, hb, self_masks(*hb.layout, false));
  const auto& L = *hb.layout;
  for (std::size_t b = 0; b < L.batch; ++b) {
    auto m = AttentionMask::padding(L.length, L.length, L.lengths[b]);
    auto kv = rows_of(g, b * L.length, L.length);
    for (std::size_t s = 0; s < L.active_count(b); ++s) {
      auto want = mha_oracle(f.mh, f.cfg, rows_of(hb.hidden, L.row(b, s, 0), L.length), kv, m);
      CHECK(max_diff(out, want, L.row(b, s, 0)) <= 1e-10);
    }
  }

  for (int trial = 0; trial < 50; ++trial) {
    auto hr = random_batch(v, 1 + uniform_index(f.rng, 3), 8, f.rng);
    std::vector<std::vector<std::size_t>> perm;
    for (std::size_t b = 0; b < hr.layout->batch; ++b) perm.push_back(random_perm(hr.layout->active_count(b), f.rng));
    auto m = self_masks(*hr.layout, trial % 2 == 1);
    auto a = aggregated_attention(f.mh, f.cfg, hr, m);
    auto b = aggregated_attention(f.mh, f.cfg, permute_streams(hr, perm), m);
    auto ap = permute_streams(StreamBatch{a, hr.layout}, perm);
    CHECK(max_abs_diff(ap.hidden.data(), b.data()) <= 1e-9);
  }
}

TEST_CASE("cross attention") {
  Fixture f;
  const auto v = vocab(5);
  const std::vector<std::size_t> idx0 = {0};

  // k = 1: per and agg coincide.
  const std::vector<Sequence> src = {{3, 4, 6, 4}};
  auto el = std::make_shared<const StreamLayout>(source_layout(v, src));
  const std::vector<Sequence> tgt = {{1, 6, 6}};
  auto dl = std::make_shared<const StreamLayout>(target_layout(v, tgt, *el, idx0));
  StreamBatch enc{random_tensor({el->rows(), 8}, f.rng), el};
  StreamBatch dec{random_tensor({dl->rows(), 8}, f.rng), dl};
  auto masks = cross_masks(*dl, *el, idx0);
  CHECK(max_abs_diff(cross_attention(f.mh, f.cfg, dec, enc, idx0, CrossMode::per, masks).data(),
                     cross_attention(f.mh, f.cfg, dec, enc, idx0, CrossMode::agg, masks).data()) <= 1e-12);

  // Per mode against the oracle, decoder stream s reads encoder stream s.
  const std::vector<Sequence> src2 = {{5, 7, 8, 5}, {6, 9}};
  auto el2 = std::make_shared<const StreamLayout>(source_layout(v, src2));
  const std::vector<Sequence> tgt2 = {{1, 5}, {1, 9, 6}};
  const std::vector<std::size_t> idx = {0, 1};
  auto dl2 = std::make_shared<const StreamLayout>(target_layout(v, tgt2, *el2, idx));
  StreamBatch e2{random_tensor({el2->rows(), 8}, f.rng), el2};
  StreamBatch d2{random_tensor({dl2->rows(), 8}, f.rng), dl2};
  auto m2 = cross_masks(*dl2, *el2, idx);
  auto per = cross_attention(f.mh, f.cfg, d2, e2, idx, CrossMode::per, m2);
  auto agg = cross_attention(f.mh, f.cfg, d2, e2, idx, CrossMode::agg, m2);
  auto g = aggregate(e2);
  for (std::size_t b = 0; b < 2; ++b) {
    auto m = AttentionMask::padding(dl2->length, el2->length, el2->lengths[b]);
    for (std::size_t s = 0; s < dl2->active_count(b); ++s) {
      auto q = rows_of(d2.hidden, dl2->row(b, s, 0), dl2->length);
      CHECK(max_diff(per, mha_oracle(f.mh, f.cfg, q, rows_of(e2.hidden, el2->row(b, s, 0), el2->length), m),
                     dl2->row(b, s, 0)) <= 1e-10);
      CHECK(max_diff(agg, mha_oracle(f.mh, f.cfg, q, rows_of(g, b * el2->length, el2->length), m),
                     dl2->row(b, s, 0)) <= 1e-10);
    }
  }

  // Joint permutation of both sides.
  std::vector<std::vector<std::size_t>> perm = {{2, 0, 1}, {1, 0}};
  auto pe = permute_streams(e2, perm), pd = permute_streams(d2, perm);
  auto pp = cross_attention(f.mh, f.cfg, pd, pe, idx, CrossMode::per, m2);
  auto back = permute_streams(StreamBatch{per, dl2}, perm);
  CHECK(max_abs_diff(back.hidden.data(), pp.data()) <= 1e-9);

  // Misaligned streams.
  CHECK_THROWS_AS(cross_attention(f.mh, f.cfg, pd, e2, idx, CrossMode::per, m2), ContractError);
}
