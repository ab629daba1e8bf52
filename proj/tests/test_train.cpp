// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "orthovox/model.hpp"
#include "orthovox/train.hpp"
#include "testlib.hpp"

namespace {

using namespace ovx;

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.scene.min_persons = 1;
    cfg.scene.max_persons = 2;
    cfg.scene.image_width = 64;
    cfg.scene.image_height = 48;
    cfg.scene.focal_px = 40.0;
    cfg.scene.space.res = {32, 32, 12};
    cfg.net = {8, 8, 8, 8, 2, 2};
    cfg.train.batch_size = 3;
    cfg.train.learning_rate = 3e-4;
    cfg.train.seed = 11;
    cfg.jln.fine_res = 8;
    return cfg;
}

class TrainFixture : public ::testing::Test {
  protected:
    void SetUp() override {
        cfg = tiny_config();
        scene_dir = tmp.sub("scene");
        write_scene(scene_dir, cfg.scene, 31, 6);
    }

    ovxtest::TempDir tmp;
    RunConfig cfg;
    std::string scene_dir;
};

TEST_F(TrainFixture, LossDecreasesAndArtifactsAppear) {
    SceneReader scene(scene_dir);
    PoseModel model = make_model(cfg.net, 15, 5);
    Trainer trainer(cfg, model, scene);
    const std::string out = tmp.sub("run");
    const TrainResult res = trainer.run(0, 3, out);

    ASSERT_EQ(res.epochs.size(), 4u);
    EXPECT_LT(res.epochs.back().lhdn, res.epochs.front().lhdn);
    EXPECT_LT(res.epochs.back().ljln, res.epochs.front().ljln);
    for (const auto& e : res.epochs) {
        EXPECT_TRUE(std::isfinite(e.lhdn));
        EXPECT_TRUE(std::isfinite(e.ljln));
        EXPECT_GT(e.lhdn, 0.0);
    }
    // Per-batch records cover every batch of every epoch (6 frames, batch 3).
    EXPECT_EQ(res.batches.size(), 8u);
    EXPECT_EQ(res.config_digest, config_digest(cfg));

    EXPECT_TRUE(std::filesystem::exists(out + "/model.ovxc"));
    EXPECT_TRUE(std::filesystem::exists(out + "/epoch_000.ovxc"));
    EXPECT_TRUE(std::filesystem::exists(out + "/epoch_003.ovxc"));
    ASSERT_TRUE(std::filesystem::exists(out + "/train_log.json"));

    std::ifstream is(out + "/train_log.json");
    const nlohmann::json log = nlohmann::json::parse(is);
    EXPECT_EQ(log.at("config_digest").get<std::string>(), res.config_digest);
    ASSERT_EQ(log.at("epochs").size(), 4u);
    EXPECT_DOUBLE_EQ(log.at("epochs")[3].at("lhdn").get<double>(), res.epochs[3].lhdn);
    EXPECT_EQ(log.at("batches").size(), 8u);
}

TEST_F(TrainFixture, ResumeReproducesNextEpochExactly) {
    SceneReader scene(scene_dir);

    // Reference run: epochs 0..2 in one go.
    PoseModel ref = make_model(cfg.net, 15, 5);
    Trainer ref_tr(cfg, ref, scene);
    const TrainResult ref_res = ref_tr.run(0, 2, tmp.sub("ref"));

    // Split run: epochs 0..1, then resume epoch 2 from the checkpoint.
    PoseModel part = make_model(cfg.net, 15, 5);
    const std::string part_dir = tmp.sub("part");
    {
        Trainer tr(cfg, part, scene);
        tr.run(0, 1, part_dir);
    }
    LoadedModel loaded = load_model_checkpoint(part_dir + "/model.ovxc");
    ASSERT_TRUE(loaded.has_optimizer_state);
    EXPECT_EQ(loaded.meta.epoch, 1);
    Trainer resume_tr(cfg, loaded.model, scene);
    load_optimizer_state(part_dir + "/model.ovxc", resume_tr.adam_hdn(), resume_tr.adam_jln());
    const TrainResult res2 = resume_tr.run(2, 2, tmp.sub("resume"));

    ASSERT_EQ(res2.epochs.size(), 1u);
    const EpochStats& a = ref_res.epochs[2];
    const EpochStats& b = res2.epochs[0];
    EXPECT_DOUBLE_EQ(a.lhdn, b.lhdn);
    EXPECT_DOUBLE_EQ(a.ljln, b.ljln);
    EXPECT_DOUBLE_EQ(a.l2d, b.l2d);
    EXPECT_DOUBLE_EQ(a.l1d, b.l1d);
    EXPECT_DOUBLE_EQ(a.lhm, b.lhm);
    EXPECT_DOUBLE_EQ(a.lconf, b.lconf);

    // The resumed weights equal the reference weights bit for bit.
    auto pa = model_params(ref);
    auto pb = model_params(loaded.model);
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        ASSERT_EQ(pa[i].name, pb[i].name);
        EXPECT_EQ(pa[i].tensor->data, pb[i].tensor->data) << pa[i].name;
    }
}

TEST_F(TrainFixture, RerunWithSameSeedIsBitExact) {
    SceneReader scene(scene_dir);
    PoseModel m1 = make_model(cfg.net, 15, 5);
    PoseModel m2 = make_model(cfg.net, 15, 5);
    Trainer t1(cfg, m1, scene);
    Trainer t2(cfg, m2, scene);
    const TrainResult r1 = t1.run(0, 1, tmp.sub("a"));
    const TrainResult r2 = t2.run(0, 1, tmp.sub("b"));
    ASSERT_EQ(r1.batches.size(), r2.batches.size());
    for (std::size_t i = 0; i < r1.batches.size(); ++i) {
        EXPECT_DOUBLE_EQ(r1.batches[i].hdn, r2.batches[i].hdn);
        EXPECT_DOUBLE_EQ(r1.batches[i].jln, r2.batches[i].jln);
    }
    // Checkpoints byte-identical.
    EXPECT_EQ(ovxtest::read_bytes(tmp.path() + "/a/model.ovxc"), ovxtest::read_bytes(tmp.path() + "/b/model.ovxc"));
}

TEST_F(TrainFixture, NonFiniteLossReportsEpochAndBatch) {
    SceneReader scene(scene_dir);
    PoseModel model = make_model(cfg.net, 15, 5);
    auto params = model_params(model);
    params.front().tensor->data[0] = std::numeric_limits<float>::quiet_NaN();
    Trainer trainer(cfg, model, scene);
    try {
        trainer.run(0, 0, tmp.sub("poisoned"));
        FAIL() << "expected non-finite loss to throw";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
        EXPECT_NE(msg.find("epoch 0"), std::string::npos) << msg;
        EXPECT_NE(msg.find("batch 0"), std::string::npos) << msg;
    }
}

TEST(TrainerEdge, EmptySceneIsRejected) {
    ovxtest::TempDir tmp;
    RunConfig cfg = tiny_config();
    const std::string dir = tmp.sub("empty");
    write_scene(dir, cfg.scene, 1, 0);
    SceneReader scene(dir);
    PoseModel model = make_model(cfg.net, 15, 5);
    Trainer trainer(cfg, model, scene);
    EXPECT_THROW(trainer.run(0, 0, tmp.sub("out")), std::runtime_error);
}

TEST(ModelCheckpoint, SaveLoadSaveIsByteIdentical) {
    ovxtest::TempDir tmp;
    NetConfig net{8, 8, 8, 8, 2, 2};
    PoseModel m = make_model(net, 15, 9);
    CheckpointMeta meta{4, 15, "cafe1234"};
    Adam<float> ah(hdn_params(m), 1e-4f);
    Adam<float> aj(jln_params(m), 1e-4f);
    // Give the optimizer non-trivial state: one step on synthetic gradients.
    for (auto& p : hdn_params(m)) p.tensor->ensure_grad();
    for (auto& p : jln_params(m)) p.tensor->ensure_grad();
    for (auto& p : model_params(m))
        for (auto& g : p.tensor->grad) g = 0.01f;
    ah.step();
    aj.step();

    const std::string p1 = tmp.sub("one.ovxc");
    save_model_checkpoint(p1, m, meta, &ah, &aj);

    LoadedModel loaded = load_model_checkpoint(p1);
    EXPECT_EQ(loaded.meta.epoch, 4);
    EXPECT_EQ(loaded.meta.joints, 15);
    EXPECT_EQ(loaded.meta.config_digest, "cafe1234");
    EXPECT_TRUE(loaded.has_optimizer_state);
    EXPECT_EQ(loaded.model.net.hdn2d_width, 8);
    EXPECT_EQ(loaded.model.net.stages_2d, 2);

    Adam<float> bh(hdn_params(loaded.model), 1e-4f);
    Adam<float> bj(jln_params(loaded.model), 1e-4f);
    load_optimizer_state(p1, bh, bj);
    const std::string p2 = tmp.sub("two.ovxc");
    save_model_checkpoint(p2, loaded.model, loaded.meta, &bh, &bj);
    EXPECT_EQ(ovxtest::read_bytes(p1), ovxtest::read_bytes(p2));
}

TEST(ModelCheckpoint, ParamCountsAreConsistent) {
    NetConfig net{8, 8, 8, 8, 2, 2};
    PoseModel m = make_model(net, 15, 1);
    const auto all = model_params(m);
    const auto hdn = hdn_params(m);
    const auto jln = jln_params(m);
    EXPECT_EQ(all.size(), hdn.size() + jln.size());
    EXPECT_GT(trainable_param_count(all), 0);
    // Running statistics are tracked but not trainable.
    bool saw_untrainable = false;
    for (const auto& p : all)
        if (!p.trainable) saw_untrainable = true;
    EXPECT_TRUE(saw_untrainable);
    EXPECT_LT(trainable_param_count(all), static_cast<std::int64_t>([&] {
                  std::int64_t n = 0;
                  for (const auto& p : all) n += static_cast<std::int64_t>(p.tensor->numel());
                  return n;
              }()));
}

}  // namespace
