#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stcl/checkpoint.hpp"
#include "stcl/dataset.hpp"
#include "stcl/probe.hpp"
#include "stcl/ridge.hpp"
#include "stcl/trainer.hpp"

namespace stcl {

// One JSON document per run; every hyperparameter has its default embedded
// here so a config file only needs to state what it overrides.
struct ExperimentConfig {
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  // data: either CSV paths or an inline synthetic-corpus spec
  std::vector<std::string> csv_paths;
  bool use_synthetic = false;
  bool synth_complex = false;
  std::size_t synth_length = 1000;
  std::string checkpoint;  // encode/eval input
  std::vector<std::size_t> horizons = {20};
  std::size_t encode_stride = 1;
  EncoderConfig encoder;
  TrainConfig train;
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("data")) {
      const auto& data = j.at("data");
      if (data.contains("csv")) {
        if (data.at("csv").is_string()) {
          cfg.csv_paths.push_back(data.at("csv").get<std::string>());
        } else {
          cfg.csv_paths = data.at("csv").get<std::vector<std::string>>();
        }
      }
      if (data.contains("synthetic")) {
        cfg.use_synthetic = true;
        const auto& syn = data.at("synthetic");
        cfg.synth_complex = syn.value("complex", false);
        cfg.synth_length = syn.value("length", cfg.synth_length);
      }
    }
    cfg.checkpoint = j.value("checkpoint", cfg.checkpoint);
    if (j.contains("horizons")) cfg.horizons = j.at("horizons").get<std::vector<std::size_t>>();
    cfg.encode_stride = j.value("stride", cfg.encode_stride);
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      cfg.encoder.m = e.value("m", cfg.encoder.m);
      cfg.encoder.h = e.value("h", cfg.encoder.h);
      cfg.encoder.hidden = e.value("hidden", cfg.encoder.hidden);
      cfg.encoder.blocks = e.value("blocks", cfg.encoder.blocks);
      cfg.encoder.d = e.value("d", cfg.encoder.d);
      cfg.encoder.proj_dim = e.value("proj_dim", cfg.encoder.proj_dim);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.iterations = t.value("iterations", cfg.train.iterations);
      cfg.train.base_lr = t.value("base_lr", cfg.train.base_lr);
      cfg.train.momentum = t.value("momentum", cfg.train.momentum);
      cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
      cfg.train.alpha = t.value("alpha", cfg.train.alpha);
      cfg.train.queue_size = t.value("queue_size", cfg.train.queue_size);
      cfg.train.m_ema = t.value("m_ema", cfg.train.m_ema);
      cfg.train.tau = t.value("tau", cfg.train.tau);
    }
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      cfg.train.augment.sigma_scale = a.value("sigma_scale", 0.5);
      cfg.train.augment.sigma_shift = a.value("sigma_shift", 0.5);
      cfg.train.augment.sigma_jitter = a.value("sigma_jitter", 0.5);
      cfg.train.augment.p_apply = a.value("p_apply", 0.5);
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  cfg.train.seed = cfg.seed;
  cfg.train.augment.rng_seed = cfg.seed;
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path,
                                               std::int64_t seed_override = -1) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw config_error("config: " + path + " is not valid JSON");
  ExperimentConfig cfg = parse_experiment_config(j);
  if (seed_override >= 0) {
    cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.train.seed = cfg.seed;
    cfg.train.augment.rng_seed = cfg.seed;
  }
  return cfg;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw io_error("write to " + path + " failed");
}

}  // namespace detail

// Series loading shared by train/encode/eval: CSVs or the synthetic corpus,
// each normalized with its own train-split means.
struct LoadedData {
  std::vector<Series> series;           // normalized full series
  std::vector<std::string> names;       // file stem or trend/season label
  std::vector<int> labels;              // synthetic pattern identity, else -1
};

inline LoadedData load_data(const ExperimentConfig& cfg) {
  LoadedData out;
  if (cfg.use_synthetic) {
    auto corpus = gen_synthetic_corpus(cfg.seed, cfg.synth_complex, cfg.synth_length);
    int label = 0;
    for (const auto& syn : corpus) {
      out.series.push_back(normalize(syn.series));
      out.names.push_back(std::string(to_string(syn.trend_id)) + "_" +
                          to_string(syn.season_id));
      out.labels.push_back(label++);
    }
  } else if (!cfg.csv_paths.empty()) {
    for (const auto& path : cfg.csv_paths) {
      out.series.push_back(normalize(load_csv(path)));
      out.names.push_back(std::filesystem::path(path).stem().string());
      out.labels.push_back(-1);
    }
  } else {
    throw config_error("config: no data section ('data.csv' or 'data.synthetic')");
  }
  return out;
}

// synth: write the corpus as CSVs plus a manifest
inline std::vector<std::string> cmd_synth(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  auto corpus = gen_synthetic_corpus(cfg.seed, cfg.synth_complex, cfg.synth_length);
  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["complex"] = cfg.synth_complex;
  manifest["length"] = cfg.synth_length;
  manifest["series"] = nlohmann::json::array();
  std::vector<std::string> written;
  for (const auto& syn : corpus) {
    const std::string name = std::string("synth_") + to_string(syn.trend_id) + "_" +
                             to_string(syn.season_id) + ".csv";
    const std::string path = (std::filesystem::path(cfg.out_dir) / name).string();
    std::string text = "t,value,trend_id,season_id\n";
    const double* pv = syn.series.values.data().data();
    for (std::size_t t = 0; t < syn.series.length(); ++t) {
      text += std::to_string(t) + "," + detail::fmt_double(pv[t]) + "," +
              to_string(syn.trend_id) + "," + to_string(syn.season_id) + "\n";
    }
    detail::write_text(path, text);
    manifest["series"].push_back({{"file", name},
                                  {"trend_id", to_string(syn.trend_id)},
                                  {"season_id", to_string(syn.season_id)}});
    written.push_back(path);
  }
  const std::string mpath = (std::filesystem::path(cfg.out_dir) / "manifest.json").string();
  detail::write_text(mpath, manifest.dump(2) + "\n");
  written.push_back(mpath);
  return written;
}

struct TrainOutputs {
  std::string checkpoint_path;
  std::string log_path;
  std::vector<StepLog> log;
};

inline TrainOutputs cmd_train(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  LoadedData data = load_data(cfg);
  EncoderConfig enc = cfg.encoder;
  enc.m = data.series[0].channels();

  std::vector<Series> train_splits;
  for (const auto& s : data.series) train_splits.push_back(split(s).train);

  Trainer trainer(train_splits, enc, cfg.train);
  TrainOutputs out;
  out.log = trainer.run();

  out.checkpoint_path = (std::filesystem::path(cfg.out_dir) / "encoder.ckpt").string();
  save_encoder(out.checkpoint_path, trainer.params(), enc);

  std::string text = "step,lr,l_time,l_amp,l_phase,total\n";
  for (const auto& row : out.log) {
    text += std::to_string(row.step) + "," + detail::fmt_double(row.lr) + "," +
            detail::fmt_double(row.losses.l_time) + "," +
            detail::fmt_double(row.losses.l_amp) + "," +
            detail::fmt_double(row.losses.l_phase) + "," +
            detail::fmt_double(row.losses.total) + "\n";
  }
  out.log_path = (std::filesystem::path(cfg.out_dir) / "train_log.csv").string();
  detail::write_text(out.log_path, text);
  return out;
}

// encode: final-timestamp representations of every stride-spaced window of
// each (full, normalized) series
inline std::vector<std::string> cmd_encode(const ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty()) throw config_error("encode: config needs 'checkpoint'");
  std::filesystem::create_directories(cfg.out_dir);
  EncoderCheckpoint ck = load_encoder(cfg.checkpoint);
  LoadedData data = load_data(cfg);
  std::vector<std::string> written;
  for (std::size_t s = 0; s < data.series.size(); ++s) {
    const Series& series = data.series[s];
    if (series.channels() != ck.config.m) {
      throw config_error("encode: series '" + data.names[s] + "' has " +
                         std::to_string(series.channels()) +
                         " channels, checkpoint expects " + std::to_string(ck.config.m));
    }
    FeatureMatrix fm = extract_features(series, ck.config, ck.params, /*k=*/0);
    std::string text = "start";
    for (std::size_t j = 0; j < fm.d; ++j) text += ",r" + std::to_string(j);
    text += "\n";
    for (std::size_t r = 0; r < fm.n; r += cfg.encode_stride) {
      text += std::to_string(r);
      for (std::size_t j = 0; j < fm.d; ++j) {
        text += "," + detail::fmt_double(fm.X[r * fm.d + j]);
      }
      text += "\n";
    }
    const std::string path =
        (std::filesystem::path(cfg.out_dir) / ("repr_" + data.names[s] + ".csv")).string();
    detail::write_text(path, text);
    written.push_back(path);
  }
  return written;
}

// eval: frozen-encoder ridge forecasting over the configured horizons,
// features pooled across series per split
inline nlohmann::json cmd_eval(const ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty()) throw config_error("eval: config needs 'checkpoint'");
  if (cfg.horizons.empty()) throw config_error("eval: config needs at least one horizon");
  for (std::size_t k : cfg.horizons) {
    if (k < 1) throw config_error("eval: horizons must be >= 1");
  }
  std::filesystem::create_directories(cfg.out_dir);
  EncoderCheckpoint ck = load_encoder(cfg.checkpoint);
  LoadedData data = load_data(cfg);

  nlohmann::json metrics;
  metrics["horizons"] = nlohmann::json::array();
  std::string csv = "horizon,metric,value\n";
  for (std::size_t k : cfg.horizons) {
    FeatureMatrix train_fm, val_fm, test_fm;
    for (const Series& s : data.series) {
      SplitSeries sp = split(s);
      for (auto [fm, part] : {std::pair<FeatureMatrix*, const Series*>{&train_fm, &sp.train},
                              {&val_fm, &sp.val},
                              {&test_fm, &sp.test}}) {
        FeatureMatrix f = extract_features(*part, ck.config, ck.params, k);
        fm->d = f.d;
        fm->out = f.out;
        fm->n += f.n;
        fm->X.insert(fm->X.end(), f.X.begin(), f.X.end());
        fm->Y.insert(fm->Y.end(), f.Y.begin(), f.Y.end());
      }
    }
    ForecastModel model = fit_forecaster(train_fm, val_fm, k);
    std::vector<double> yhat = predict(model.weights, test_fm.d, test_fm.out, test_fm.X, test_fm.n);
    auto [mse, mae] = evaluate(yhat, test_fm.Y);
    metrics["horizons"].push_back({{"horizon", k},
                                   {"mse", mse},
                                   {"mae", mae},
                                   {"alpha", model.chosen_alpha}});
    csv += std::to_string(k) + ",mse," + detail::fmt_double(mse) + "\n";
    csv += std::to_string(k) + ",mae," + detail::fmt_double(mae) + "\n";

    // ridge model export: shared binary container + JSON metadata
    Tensor w({model.feature_dim + 1, model.out_dim}, model.weights);
    const std::string mpath =
        (std::filesystem::path(cfg.out_dir) / ("ridge_h" + std::to_string(k) + ".ckpt")).string();
    save_arrays(mpath, {{"weights", &w}},
                {{"horizon", k},
                 {"alpha", model.chosen_alpha},
                 {"feature_dim", model.feature_dim},
                 {"out_dim", model.out_dim}});
  }
  detail::write_text((std::filesystem::path(cfg.out_dir) / "metrics.json").string(),
                     metrics.dump(2) + "\n");
  detail::write_text((std::filesystem::path(cfg.out_dir) / "metrics.csv").string(), csv);
  return metrics;
}

}  // namespace stcl
