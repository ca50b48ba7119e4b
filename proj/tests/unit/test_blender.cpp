// Copyright 2026 The GaitEditor Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "fixtures.hpp"
#include "gaiteditor/blender/attid_blender.hpp"
#include "gaiteditor/error.hpp"

using namespace gaiteditor;
using blender::AttIDBlender;

namespace {

AttIDBlender desk_blender(uint64_t seed = 2) {
  blender::BlenderConfig c;
  AttIDBlender b(c, seed);
  b.mark_identity_ready();
  return b;
}

data::SilhouetteSequence desk_walker(int T, int64_t id = 5) { return fixtures::walker(64, T, id); }

}  // namespace

TEST_SUITE("blender") {
  TEST_CASE("row groups split 3 / 4 / 3") {
    blender::BlenderConfig c;
    CHECK(c.coarse_end() == 3);
    CHECK(c.medium_end() == 7);
  }

  TEST_CASE("attribute features are 10 x T x 512") {
    auto b = desk_blender();
    auto f = b.extract_attributes(desk_walker(5)).f_att;
    CHECK(f.sizes() == std::vector<int64_t>{10, 5, 512});
  }

  TEST_CASE("attribute extraction is frame by frame") {
    auto b = desk_blender();
    auto s = desk_walker(4);
    auto perm = torch::tensor({2, 0, 3, 1}, torch::kInt64);
    auto f = b.extract_attributes(s).f_att;
    auto fp = b.extract_attributes(data::SilhouetteSequence(s.frames().index_select(0, perm))).f_att;
    CHECK(fixtures::max_abs(fp, f.index_select(1, perm)) < 1e-5);

    auto dup = s.frames().clone();
    dup[3].copy_(dup[0]);
    auto fd = b.extract_attributes(data::SilhouetteSequence(dup)).f_att;
    CHECK(fixtures::max_abs(fd.select(1, 0), fd.select(1, 3)) == 0.0);
  }

  TEST_CASE("identity embedding is 16 x 256 and order invariant") {
    auto b = desk_blender();
    auto s = desk_walker(6);
    auto g = b.embed_identity(s).g_id;
    CHECK(g.sizes() == std::vector<int64_t>{16, 256});
    auto shuffled = data::SilhouetteSequence(s.frames().index_select(0, torch::tensor({5, 3, 1, 0, 2, 4})));
    CHECK(fixtures::max_abs(b.embed_identity(shuffled).g_id, g) < 1e-6);
  }

  TEST_CASE("identity embedding needs a trained encoder") {
    AttIDBlender b(blender::BlenderConfig{}, 1);
    CHECK_THROWS_AS(b.embed_identity(desk_walker(2)), NotLoadedError);
  }

  TEST_CASE("projection repeats one code over time") {
    auto b = desk_blender();
    auto g = b.embed_identity(desk_walker(3));
    auto f1 = b.project_identity(g, 1).f_id;
    CHECK(f1.sizes() == std::vector<int64_t>{10, 1, 512});
    auto f6 = b.project_identity(g, 6).f_id;
    CHECK(fixtures::max_abs(f6.select(1, 0), f6.select(1, 5)) == 0.0);
  }

  TEST_CASE("zero embedding projects to the constant bias image") {
    auto b = desk_blender();
    auto f = b.project_identity({torch::zeros({16, 256})}, 4).f_id;
    torch::NoGradGuard ng;
    auto bias = b.head->forward(torch::zeros({1, 16, 256}))[0];
    for (int t = 0; t < 4; ++t) CHECK(fixtures::max_abs(f.select(1, t), bias) < 1e-5);
  }

  TEST_CASE("confidence keeps the feature shape, lies in [0, 1] and is deterministic") {
    auto b = desk_blender();
    auto s = desk_walker(3);
    auto fa = b.extract_attributes(s);
    auto fi = b.project_identity(b.embed_identity(s), 3);
    auto q = b.estimate_confidence(fa, fi).q;
    CHECK(q.sizes() == std::vector<int64_t>{10, 3, 512});
    CHECK(q.min().item<float>() >= 0.0f);
    CHECK(q.max().item<float>() <= 1.0f);
    CHECK(fixtures::max_abs(q, b.estimate_confidence(fa, fi).q) == 0.0);
    CHECK_THROWS_AS(b.estimate_confidence(fa, b.project_identity(b.embed_identity(s), 2)), ShapeError);
  }

  TEST_CASE("fusion endpoints and midpoint") {
    auto fa = torch::randn({10, 4, 512}), fi = torch::randn({10, 4, 512});
    auto ones = torch::ones_like(fa), zeros = torch::zeros_like(fa);
    CHECK(fixtures::max_abs(AttIDBlender::fuse({fa}, {fi}, {ones}).codes, fa) == 0.0);
    CHECK(fixtures::max_abs(AttIDBlender::fuse({fa}, {fi}, {zeros}).codes, fi) == 0.0);
    auto mid = AttIDBlender::fuse({torch::full_like(fa, 2.0)}, {zeros}, {torch::full_like(fa, 0.5)}).codes;
    CHECK(fixtures::max_abs(mid, ones) == 0.0);
    CHECK_THROWS_AS(AttIDBlender::fuse({fa}, {fi}, {torch::full_like(fa, 1.5)}), ContractError);
  }

  TEST_CASE("blend follows the attribute stream's length") {
    auto b = desk_blender();
    auto w = b.blend(desk_walker(7, 1), desk_walker(30, 2));
    CHECK(w.codes.sizes() == std::vector<int64_t>{10, 7, 512});
  }

  TEST_CASE("blend is asymmetric for distinct inputs") {
    auto b = desk_blender();
    auto si = desk_walker(4, 1), sj = fixtures::walker(64, 4, 2, 0.0);
    auto ab = b.blend(si, sj).codes, ba = b.blend(sj, si).codes;
    CHECK((ab - ba).pow(2).sum().item<double>() > 0.0);
  }

  TEST_CASE("batched forward agrees with the typed path") {
    auto m = fixtures::tiny_models();
    m.blender.mark_identity_ready();
    auto s = fixtures::walker(32, 4);
    auto typed = m.blender.blend(s, s).codes;  // [L, T, C]
    auto out = m.blender.forward(s.as_batch().unsqueeze(0), s.as_batch().unsqueeze(0));
    CHECK(fixtures::max_abs(out.w[0], typed) < 1e-5);
  }

  TEST_CASE("marking the identity encoder ready freezes it") {
    auto b = desk_blender();
    for (auto& p : b.e_id->parameters()) CHECK_FALSE(p.requires_grad());
    for (auto& p : b.trainable_parameters()) CHECK(p.requires_grad());
  }

  TEST_CASE("identity training separates two walkers") {
    auto m = fixtures::tiny_models(4);
    auto ds = fixtures::corpus(8, 32, 8, 11);
    blender::IdentityTrainingConfig ic;
    ic.steps = 30;
    ic.identities_per_batch = 2;
    ic.sequences_per_identity = 2;
    blender::train_identity_encoder(m.blender, ds, ic);
    REQUIRE(m.blender.identity_ready());
    auto a = m.blender.embed_identity(fixtures::walker(32, 8, 1)).g_id;
    auto c = m.blender.embed_identity(fixtures::walker(32, 8, 2)).g_id;
    CHECK(blender::embedding_cosine(a, c) < 1.0);
  }

  TEST_CASE("config validation") {
    blender::BlenderConfig c;
    c.resolution = 24;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    CHECK(blender::BlenderConfig::from_json(c.to_json()).hash() == c.hash());
  }
}
