#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "edgeseg/checkpoint.hpp"
#include "edgeseg/optimizer.hpp"
#include "edgeseg/phantom.hpp"
#include "edgeseg/trainer.hpp"
#include "test_support.hpp"

using namespace edgeseg;

namespace {

TrainingCase phantom_case(std::array<std::int64_t, 3> shape, std::uint64_t seed) {
  PhantomSpec spec;
  spec.shape = shape;
  spec.center = {double(shape[0]) / 2 - 0.5, double(shape[1]) / 2 - 0.5, double(shape[2]) / 2 - 0.5};
  spec.radii = {double(shape[0]) / 4, double(shape[1]) / 5, double(shape[2]) / 4};
  spec.noise_sigma = 0.05;
  spec.seed = seed;
  const PhantomCase pc = make_ellipsoid_phantom(spec);
  return TrainingCase{pc.image, pc.label};
}

TrainConfig desk_config(ModelMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.seed = 11;
  cfg.patch_size = {48, 48, 16};
  cfg.batch_size = 2;
  cfg.micro_batch = 1;
  cfg.max_iterations = 4;
  cfg.checkpoint_every = 0;
  cfg.max_displacement = 2.0;
  return cfg;
}

NetworkConfig desk_network(ModelMode mode, std::uint64_t seed = 11) {
  NetworkConfig nc;
  nc.mode = mode;
  nc.width_multiplier = 0.0625;
  nc.seed = seed;
  return nc;
}

using testsupport::TempDir;

bool same_values(const Tensor<float>& a, const Tensor<float>& b) {
  if (!(a.shape() == b.shape())) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("the full-mode schedule steps down a decade every 2000 iterations") {
  TrainConfig cfg;
  cfg.mode = ModelMode::full;
  CHECK(lr_schedule(0, cfg) == 0.001);
  CHECK(lr_schedule(1999, cfg) == 0.001);
  CHECK(lr_schedule(2000, cfg) == 0.0001);
  CHECK(lr_schedule(3999, cfg) == 0.0001);
  CHECK(lr_schedule(4000, cfg) == 0.00001);
  CHECK_THROWS_AS(lr_schedule(-1, cfg), ContractViolation);

  cfg.base_lr = 0.02;
  CHECK(lr_schedule(0, cfg) == 0.02);
  CHECK(lr_schedule(2000, cfg) == doctest::Approx(0.002).epsilon(1e-12));
}

TEST_CASE("the pretrain schedule is constant with an optional per-epoch decay reading") {
  TrainConfig cfg;
  cfg.mode = ModelMode::pretrain;
  CHECK(lr_schedule(0, cfg) == 0.01);
  CHECK(lr_schedule(5000, cfg) == 0.01);
  cfg.pretrain_lr_decay = true;
  cfg.epoch_size = 50;
  CHECK(lr_schedule(0, cfg) == 0.01);
  CHECK(lr_schedule(49, cfg) == 0.01);
  CHECK(lr_schedule(50, cfg) == doctest::Approx(0.01 * (1.0 - 1e-6)).epsilon(1e-15));
  CHECK(lr_schedule(100, cfg) == doctest::Approx(0.01 * std::pow(1.0 - 1e-6, 2)).epsilon(1e-15));
}

TEST_CASE("sgd momentum follows the hand-computed recurrence") {
  auto p = ad::parameter(Tensor<float>(TensorShape{1, 1, 1, 1, 1}, 1.0f), "p");
  OptimizerConfig oc;
  oc.kind = OptimizerKind::sgd;
  oc.momentum = 0.9;
  Optimizer<float> opt(oc, {p});

  p->grad = Tensor<float>(p->value.shape(), 1.0f);
  opt.step(0.1);  // v1 = 1, p = 1 - 0.1
  CHECK(p->value[0] == doctest::Approx(0.9f).epsilon(1e-6));
  p->grad = Tensor<float>(p->value.shape(), 1.0f);
  opt.step(0.1);  // v2 = 0.9 + 1 = 1.9, p = 0.9 - 0.19
  CHECK(p->value[0] == doctest::Approx(0.71f).epsilon(1e-6));
}

TEST_CASE("sgd weight decay pulls parameters toward zero without a gradient") {
  auto p = ad::parameter(Tensor<float>(TensorShape{1, 1, 1, 1, 1}, 2.0f), "p");
  OptimizerConfig oc;
  oc.kind = OptimizerKind::sgd;
  oc.momentum = 0.0;
  oc.weight_decay = 0.5;
  Optimizer<float> opt(oc, {p});
  p->grad = Tensor<float>(p->value.shape(), 0.0f);
  opt.step(0.1);  // effective gradient 0.5 * 2
  CHECK(p->value[0] == doctest::Approx(1.9f).epsilon(1e-6));
}

TEST_CASE("adam's first bias-corrected step is lr times the gradient sign") {
  auto p = ad::parameter(Tensor<float>(TensorShape{1, 1, 2, 1, 1}, 0.0f), "p");
  OptimizerConfig oc;
  oc.kind = OptimizerKind::adam;
  Optimizer<float> opt(oc, {p});
  p->grad = Tensor<float>(p->value.shape());
  p->grad[0] = 3.0f;
  p->grad[1] = -0.004f;
  opt.step(0.001);
  // mhat = g, vhat = g*g, update = lr * g / (|g| + eps) ~= lr * sign(g)
  CHECK(p->value[0] == doctest::Approx(-0.001f).epsilon(1e-4));
  CHECK(p->value[1] == doctest::Approx(0.001f).epsilon(1e-3));
  CHECK(opt.steps() == 1);
}

TEST_CASE("optimizer validation rejects broken hyperparameters") {
  auto p = ad::parameter(Tensor<float>(TensorShape{1, 1, 1, 1, 1}, 0.0f), "p");
  OptimizerConfig oc;
  oc.momentum = 1.0;
  CHECK_THROWS_AS(Optimizer<float>(oc, {p}), ConfigError);
  oc = {};
  oc.beta2 = 1.5;
  CHECK_THROWS_AS(Optimizer<float>(oc, {p}), ConfigError);
  oc = {};
  Optimizer<float> opt(oc, {p});
  CHECK_THROWS_AS(opt.step(-0.1), ContractViolation);
}

TEST_CASE("train config validation names the broken constraint") {
  TrainConfig cfg = desk_config(ModelMode::full);
  cfg.micro_batch = 3;  // does not divide batch_size 2
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = desk_config(ModelMode::full);
  cfg.foreground_bias = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = desk_config(ModelMode::full);
  cfg.max_displacement = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("trainer construction rejects inconsistent inputs") {
  ModelGraph<float> model(desk_network(ModelMode::full));
  CHECK_THROWS_AS(Trainer(model, {}, desk_config(ModelMode::full), ""), ConfigError);
  CHECK_THROWS_AS(Trainer(model, {phantom_case({48, 48, 16}, 1)}, desk_config(ModelMode::pretrain), ""),
                  ContractViolation);
  TrainingCase broken = phantom_case({48, 48, 16}, 1);
  broken.label = Volume(24, 24, 8, VolumeKind::label);
  CHECK_THROWS_AS(Trainer(model, {broken}, desk_config(ModelMode::full), ""), ContractViolation);
}

TEST_CASE("gradient accumulation runs batch over micro-batch forward passes") {
  ModelGraph<float> model(desk_network(ModelMode::full));
  TrainConfig cfg = desk_config(ModelMode::full);
  cfg.patch_size = {8, 8, 4};
  cfg.batch_size = 16;
  cfg.micro_batch = 2;
  cfg.max_displacement = 0.0;
  Trainer trainer(model, {phantom_case({8, 8, 4}, 2)}, cfg, "");
  trainer.step();
  CHECK(model.forward_count() == 8);
  CHECK(trainer.iteration() == 1);
}

TEST_CASE("a forced zero learning rate leaves parameters untouched but advances the count") {
  ModelGraph<float> model(desk_network(ModelMode::full));
  TrainConfig cfg = desk_config(ModelMode::full);
  cfg.base_lr = 0.0;
  cfg.max_displacement = 0.0;
  std::vector<Tensor<float>> before;
  for (const auto& p : model.parameters()) before.push_back(p->value);
  Trainer trainer(model, {phantom_case({48, 48, 16}, 3)}, cfg, "");
  const StepRecord rec = trainer.step();
  CHECK(rec.lr == 0.0);
  CHECK(trainer.iteration() == 1);
  const auto& params = model.parameters();
  bool unchanged = true;
  for (std::size_t i = 0; i < params.size(); ++i) unchanged &= same_values(params[i]->value, before[i]);
  CHECK(unchanged);
}

TEST_CASE("same seed, same data: two training runs are bit-identical") {
  const TrainConfig cfg = desk_config(ModelMode::full);
  std::vector<TrainingCase> data{phantom_case({56, 56, 20}, 4), phantom_case({48, 48, 16}, 5)};

  ModelGraph<float> model_a(desk_network(ModelMode::full));
  Trainer trainer_a(model_a, data, cfg, "");
  std::vector<StepRecord> steps_a;
  for (int i = 0; i < 4; ++i) steps_a.push_back(trainer_a.step());

  ModelGraph<float> model_b(desk_network(ModelMode::full));
  Trainer trainer_b(model_b, data, cfg, "");
  for (int i = 0; i < 4; ++i) {
    const StepRecord s = trainer_b.step();
    CHECK(s.total == steps_a[std::size_t(i)].total);
    CHECK(s.dice == steps_a[std::size_t(i)].dice);
    CHECK(s.lr == steps_a[std::size_t(i)].lr);
  }
  const auto& pa = model_a.parameters();
  const auto& pb = model_b.parameters();
  bool identical = true;
  for (std::size_t i = 0; i < pa.size(); ++i) identical &= same_values(pa[i]->value, pb[i]->value);
  CHECK(identical);
}

TEST_CASE("a run with zero iterations emits only the initialization checkpoint") {
  TempDir dir("trainer-init");
  ModelGraph<float> model(desk_network(ModelMode::full));
  TrainConfig cfg = desk_config(ModelMode::full);
  cfg.max_iterations = 0;
  Trainer trainer(model, {phantom_case({48, 48, 16}, 6)}, cfg, dir.path().string());
  const TrainResult result = trainer.run();
  CHECK(result.steps.empty());
  REQUIRE(!result.final_checkpoint.empty());
  const Checkpoint ck = load_checkpoint(result.final_checkpoint);
  CHECK(ck.iteration == 0);
  CHECK(ck.topology_hash == model.topology_hash());
  CHECK(ck.find("encoder.stem.conv.w") != nullptr);
  CHECK(ck.find("opt.m.encoder.stem.conv.w") != nullptr);
  CHECK(ck.find("opt.v.encoder.stem.conv.w") != nullptr);
}

TEST_CASE("checkpoint files survive a round trip and reject corruption") {
  TempDir dir("trainer-ckpt");
  Checkpoint ck;
  ck.topology_hash = 0x1234;
  ck.encoder_hash = 0x5678;
  ck.seed = 42;
  ck.iteration = 17;
  ck.optimizer_steps = 9;
  Tensor<float> t(TensorShape{2, 3, 4, 5, 6});
  testsupport::fill_wave(t, 1.0f, 0.3f);
  ck.tensors.push_back({"a.w", t});
  ck.tensors.push_back({"b.w", Tensor<float>(TensorShape{1, 1, 1, 1, 1}, -2.5f)});

  const std::string path = (dir / "state.ckpt").string();
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.topology_hash == ck.topology_hash);
  CHECK(back.encoder_hash == ck.encoder_hash);
  CHECK(back.seed == ck.seed);
  CHECK(back.iteration == ck.iteration);
  CHECK(back.optimizer_steps == ck.optimizer_steps);
  REQUIRE(back.tensors.size() == 2);
  CHECK(same_values(back.tensors[0].data, t));
  CHECK(back.find("b.w") != nullptr);
  CHECK((*back.find("b.w"))[0] == -2.5f);
  CHECK(back.find("missing") == nullptr);

  SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint((dir / "nope.ckpt").string()), IoError); }
  SUBCASE("bad magic") {
    const std::string bad = (dir / "bad.ckpt").string();
    std::ofstream(bad, std::ios::binary) << "NOPE and then some bytes";
    CHECK_THROWS_AS(load_checkpoint(bad), FormatError);
  }
  SUBCASE("truncation") {
    const auto full_size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full_size - 40);
    CHECK_THROWS_AS(load_checkpoint(path), TruncationError);
  }
}

TEST_CASE("encoder weights transfer from a pretrain checkpoint into the full model") {
  TempDir dir("trainer-transfer");
  ModelGraph<float> pre(desk_network(ModelMode::pretrain, 3));
  TrainConfig pcfg = desk_config(ModelMode::pretrain);
  pcfg.max_iterations = 0;
  Trainer ptrainer(pre, {phantom_case({48, 48, 16}, 7)}, pcfg, dir.path().string());
  const std::string ckpt = ptrainer.run().final_checkpoint;

  ModelGraph<float> full(desk_network(ModelMode::full, 9));
  std::vector<Tensor<float>> decoder_before;
  for (const auto& p : full.parameters())
    if (p->name.rfind("encoder.", 0) != 0) decoder_before.push_back(p->value);

  const EncoderLoadReport report = load_encoder_checkpoint(full, ckpt, true);
  CHECK(report.skipped == 0);
  std::int64_t encoder_tensors = 0;
  for (const auto& p : pre.parameters()) encoder_tensors += p->name.rfind("encoder.", 0) == 0;
  CHECK(report.loaded == encoder_tensors);

  bool encoder_matches = true;
  for (const auto& p : full.parameters()) {
    if (p->name.rfind("encoder.", 0) != 0) continue;
    encoder_matches &= same_values(p->value, pre.find_parameter(p->name)->value);
  }
  CHECK(encoder_matches);

  std::size_t d = 0;
  bool decoder_untouched = true;
  for (const auto& p : full.parameters())
    if (p->name.rfind("encoder.", 0) != 0) decoder_untouched &= same_values(p->value, decoder_before[d++]);
  CHECK(decoder_untouched);
}

TEST_CASE("a renamed encoder tensor is skipped leniently and fatal strictly") {
  TempDir dir("trainer-rename");
  ModelGraph<float> pre(desk_network(ModelMode::pretrain, 3));
  TrainConfig pcfg = desk_config(ModelMode::pretrain);
  pcfg.max_iterations = 0;
  Trainer ptrainer(pre, {phantom_case({48, 48, 16}, 8)}, pcfg, dir.path().string());
  Checkpoint ck = load_checkpoint(ptrainer.run().final_checkpoint);
  for (auto& e : ck.tensors)
    if (e.name == "encoder.stem.conv.w") e.name = "encoder.stem.conv.w_legacy";
  const std::string edited = (dir / "edited.ckpt").string();
  save_checkpoint(edited, ck);

  ModelGraph<float> full(desk_network(ModelMode::full, 9));
  const EncoderLoadReport lenient = load_encoder_checkpoint(full, edited, false);
  CHECK(lenient.skipped == 1);
  try {
    load_encoder_checkpoint(full, edited, true);
    FAIL("expected a strict-mode failure");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("encoder.stem.conv.w_legacy") != std::string::npos);
  }
}

TEST_CASE("strict encoder loading refuses a different encoder topology") {
  TempDir dir("trainer-width");
  NetworkConfig wider = desk_network(ModelMode::pretrain, 3);
  wider.width_multiplier = 0.125;
  ModelGraph<float> pre(wider);
  TrainConfig pcfg = desk_config(ModelMode::pretrain);
  pcfg.max_iterations = 0;
  Trainer ptrainer(pre, {phantom_case({48, 48, 16}, 9)}, pcfg, dir.path().string());
  const std::string ckpt = ptrainer.run().final_checkpoint;

  ModelGraph<float> full(desk_network(ModelMode::full, 9));
  CHECK_THROWS_AS(load_encoder_checkpoint(full, ckpt, true), LoadError);
  const EncoderLoadReport lenient = load_encoder_checkpoint(full, ckpt, false);
  CHECK(lenient.loaded == 0);  // every shape differs at the other width
  CHECK(lenient.skipped > 0);
}

TEST_CASE("resuming from a checkpoint reproduces the unbroken run bit for bit") {
  std::vector<TrainingCase> data{phantom_case({56, 56, 20}, 10), phantom_case({48, 48, 16}, 11)};
  TrainConfig cfg = desk_config(ModelMode::full);
  cfg.max_iterations = 4;
  cfg.checkpoint_every = 2;

  TempDir dir_a("trainer-resume-a");
  ModelGraph<float> model_a(desk_network(ModelMode::full));
  Trainer trainer_a(model_a, data, cfg, dir_a.path().string());
  const TrainResult run_a = trainer_a.run();
  REQUIRE(run_a.steps.size() == 4);

  TempDir dir_b("trainer-resume-b");
  ModelGraph<float> model_b(desk_network(ModelMode::full, 99));  // init overwritten by restore
  TrainConfig resume_cfg = cfg;
  resume_cfg.resume_from = (dir_a / "checkpoint_000002.ckpt").string();
  Trainer trainer_b(model_b, data, resume_cfg, dir_b.path().string());
  CHECK(trainer_b.iteration() == 2);
  const TrainResult run_b = trainer_b.run();
  REQUIRE(run_b.steps.size() == 2);
  CHECK(run_b.steps[0].total == run_a.steps[2].total);
  CHECK(run_b.steps[1].total == run_a.steps[3].total);

  const auto& pa = model_a.parameters();
  const auto& pb = model_b.parameters();
  bool identical = true;
  for (std::size_t i = 0; i < pa.size(); ++i) identical &= same_values(pa[i]->value, pb[i]->value);
  CHECK(identical);

  SUBCASE("seed mismatch is refused") {
    ModelGraph<float> model_c(desk_network(ModelMode::full));
    TrainConfig wrong = resume_cfg;
    wrong.seed = 12345;
    CHECK_THROWS_AS(Trainer(model_c, data, wrong, ""), LoadError);
  }
}

TEST_CASE("a poisoned parameter aborts with the term and iteration named") {
  ModelGraph<float> model(desk_network(ModelMode::full));
  // The final logit bias feeds sigmoid directly, so the NaN cannot be
  // masked by an intervening relu or pooling comparison.
  model.find_parameter("fusion.out.b")->value[0] = std::nanf("");
  TrainConfig cfg = desk_config(ModelMode::full);
  cfg.max_displacement = 0.0;
  Trainer trainer(model, {phantom_case({48, 48, 16}, 12)}, cfg, "");
  try {
    trainer.step();
    FAIL("expected an abort");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("iteration 0") != std::string::npos);
    CHECK(msg.find("loss is non-finite") != std::string::npos);
  }
}

TEST_CASE("the training log is line-delimited json with one record per step") {
  TempDir dir("trainer-log");
  ModelGraph<float> model(desk_network(ModelMode::full));
  TrainConfig cfg = desk_config(ModelMode::full);
  cfg.max_iterations = 2;
  Trainer trainer(model, {phantom_case({48, 48, 16}, 13)}, cfg, dir.path().string());
  trainer.run();

  std::ifstream log(dir / "train_log.jsonl");
  REQUIRE(log.good());
  std::string line;
  std::int64_t expected_iteration = 0;
  while (std::getline(log, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.at("iteration").get<std::int64_t>() == expected_iteration++);
    CHECK(j.at("lr").get<double>() == 0.001);
    CHECK(std::isfinite(j.at("total").get<double>()));
    CHECK(std::isfinite(j.at("dice").get<double>()));
    CHECK(j.contains("edge1"));
    CHECK(j.contains("edge3"));
    CHECK(j.at("wall_ms").get<double>() > 0.0);
  }
  CHECK(expected_iteration == 2);
}

TEST_CASE("pretrain steps drive the cross-entropy objective") {
  ModelGraph<float> model(desk_network(ModelMode::pretrain));
  TrainConfig cfg = desk_config(ModelMode::pretrain);
  cfg.max_displacement = 0.0;
  Trainer trainer(model, {phantom_case({48, 48, 16}, 14)}, cfg, "");
  const StepRecord first = trainer.step();
  CHECK(first.lr == 0.01);
  CHECK(std::isfinite(first.total));
  CHECK(first.edge[0] == 0.0f);
  StepRecord last = first;
  for (int i = 0; i < 5; ++i) last = trainer.step();
  CHECK(last.total < first.total);
}

}  // TEST_SUITE
