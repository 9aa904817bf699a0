// Copyright 2026 The SSSL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: synth, featurize, train-segment, eval, cv, predict.
// Exit status is 0 on success, 2 for usage or configuration errors and 1 for
// runtime failures.

#include <iostream>

#include <CLI11.hpp>

#include "sssl/commands.hpp"

namespace {

using sssl::config::RunConfig;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key = value configuration file");
  app->add_option("--set", c.overrides, "override a configuration key (key=value), repeatable");
}

RunConfig resolve(const Common& c) {
  RunConfig rc;
  if (!c.config_path.empty()) rc.apply(sssl::config::load_file(c.config_path));
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw sssl::ConfigError("--set expects key=value, got '" + kv + "'");
    rc.set(sssl::config::trim(kv.substr(0, eq)), sssl::config::trim(kv.substr(eq + 1)));
  }
  return rc;
}

template <typename T>
void set_if(RunConfig& rc, const char* key, const std::optional<T>& v) {
  if (!v) return;
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  rc.set(key, os.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segment-level music classification under song-level label noise"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log progress to stderr");

  // synth
  Common synth_c;
  std::string synth_out, synth_mode;
  std::optional<double> synth_noise;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with controlled label noise");
  add_common(synth, synth_c);
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--mode", synth_mode, "feature or audio")->check(CLI::IsMember({"feature", "audio"}));
  synth->add_option("--noise-rate", synth_noise, "fraction of training songs with a flipped label");
  synth->add_option("--seed", synth_seed, "random seed");

  // featurize
  Common feat_c;
  sssl::cli::FeaturizeOptions feat_o;
  std::optional<int> feat_seg_dur, feat_overlap;
  std::optional<std::size_t> feat_threads;
  auto* feat = app.add_subcommand("featurize", "segment audio and cache log-mel spectrograms");
  add_common(feat, feat_c);
  feat->add_option("--manifest", feat_o.manifest, "CSV with path,song_id,label")->required();
  feat->add_option("--seg-dur", feat_seg_dur, "segment duration in seconds");
  feat->add_option("--overlap", feat_overlap, "segment overlap in seconds");
  feat->add_option("--out", feat_o.out, "feature cache path")->required();
  feat->add_option("--threads", feat_threads, "decoder threads");

  // train-segment
  Common train_c;
  sssl::cli::TrainSegmentOptions train_o;
  bool train_baseline = false;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::size_t> train_epochs, train_warm;
  std::optional<double> train_lambda;
  auto* train = app.add_subcommand("train-segment", "train the segment classifier");
  add_common(train, train_c);
  train->add_option("--cache", train_o.cache, "training feature cache")->required();
  train->add_option("--heldout-cache", train_o.heldout_cache, "held-out feature cache (true labels)");
  train->add_option("--model-out", train_o.model_out, "model output path")->required();
  train->add_option("--metrics-out", train_o.metrics_out, "per-epoch JSON lines");
  train->add_option("--diagnostics-dir", train_o.diagnostics_dir, "write per-epoch partition CSVs here");
  train->add_flag("--baseline", train_baseline, "plain cross-entropy training on the noisy labels");
  train->add_option("--seed", train_seed, "random seed");
  train->add_option("--epochs", train_epochs, "training epochs");
  train->add_option("--warm-up", train_warm, "warm-up epochs");
  train->add_option("--lambda", train_lambda, "weight of the consistency term");

  // eval
  Common eval_c;
  sssl::cli::EvalOptions eval_o;
  std::optional<double> eval_theta;
  std::optional<int> eval_seg_dur, eval_overlap;
  auto* eval = app.add_subcommand("eval", "segment- and song-level metrics on labeled songs");
  add_common(eval, eval_c);
  eval->add_option("--model", eval_o.model, "segment model")->required();
  eval->add_option("--cache", eval_o.cache, "evaluation feature cache");
  eval->add_option("--manifest", eval_o.manifest, "evaluation audio manifest (featurized on the fly)");
  eval->add_option("--seg-dur", eval_seg_dur, "segment duration in seconds (with --manifest)");
  eval->add_option("--overlap", eval_overlap, "segment overlap in seconds (with --manifest)");
  eval->add_option("--train-cache", eval_o.train_cache, "fit the song classifier on these songs");
  eval->add_option("--song-model", eval_o.song_model, "previously fitted song classifier");
  eval->add_option("--song-model-out", eval_o.song_model_out, "save the fitted song classifier");
  eval->add_option("--features-out", eval_o.features_out, "write aggregated song features as CSV");
  eval->add_option("--theta", eval_theta, "segment probability threshold for song features");
  eval->add_option("--out", eval_o.out, "metrics JSON");

  // cv
  Common cv_c;
  sssl::cli::CvOptions cv_o;
  std::optional<int> cv_seg_dur, cv_overlap;
  std::optional<std::uint64_t> cv_seed;
  std::optional<std::size_t> cv_k;
  bool cv_baseline = false;
  auto* cv = app.add_subcommand("cv", "song-level k-fold cross-validation of the full pipeline");
  add_common(cv, cv_c);
  cv->add_option("--cache", cv_o.cache, "feature cache");
  cv->add_option("--manifest", cv_o.manifest, "audio manifest (featurized on the fly)");
  cv->add_option("--seg-dur", cv_seg_dur, "segment duration in seconds (with --manifest)");
  cv->add_option("--overlap", cv_overlap, "segment overlap in seconds (with --manifest)");
  cv->add_option("--k", cv_k, "number of folds");
  cv->add_option("--seed", cv_seed, "random seed");
  cv->add_flag("--baseline", cv_baseline, "plain cross-entropy segment training");
  cv->add_option("--out", cv_o.out, "metrics JSON");

  // predict
  Common pred_c;
  sssl::cli::PredictOptions pred_o;
  std::optional<int> pred_seg_dur, pred_overlap;
  auto* pred = app.add_subcommand("predict", "song labels for new audio");
  add_common(pred, pred_c);
  pred->add_option("--model", pred_o.model, "segment model")->required();
  pred->add_option("--song-model", pred_o.song_model, "song classifier")->required();
  pred->add_option("--audio", pred_o.audio, "a single audio file");
  pred->add_option("--manifest", pred_o.manifest, "manifest of audio files");
  pred->add_option("--seg-dur", pred_seg_dur, "segment duration in seconds");
  pred->add_option("--overlap", pred_overlap, "segment overlap in seconds");
  pred->add_option("--out", pred_o.out, "predictions CSV")->required();
  pred->add_option("--dump-segments", pred_o.dump_segments, "per-segment probabilities CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (verbose) sssl::set_log_level(sssl::LogLevel::info);

  try {
    if (*synth) {
      sssl::cli::SynthOptions o{resolve(synth_c), synth_out};
      if (!synth_mode.empty()) o.rc.set("synth_mode", synth_mode);
      set_if(o.rc, "noise_rate", synth_noise);
      set_if(o.rc, "seed", synth_seed);
      sssl::cli::cmd_synth(o, std::cout);
    } else if (*feat) {
      auto rc = resolve(feat_c);
      set_if(rc, "segment_duration", feat_seg_dur);
      set_if(rc, "segment_overlap", feat_overlap);
      set_if(rc, "threads", feat_threads);
      rc.validate();
      feat_o.segment_duration = rc.segment_duration;
      feat_o.segment_overlap = rc.segment_overlap;
      feat_o.threads = rc.threads;
      sssl::cli::cmd_featurize(feat_o, std::cout);
    } else if (*train) {
      train_o.rc = resolve(train_c);
      if (train_baseline) train_o.rc.set("baseline", "true");
      set_if(train_o.rc, "seed", train_seed);
      set_if(train_o.rc, "epochs", train_epochs);
      set_if(train_o.rc, "warm_up_epochs", train_warm);
      set_if(train_o.rc, "lambda", train_lambda);
      sssl::cli::cmd_train_segment(train_o, std::cout);
    } else if (*eval) {
      eval_o.rc = resolve(eval_c);
      set_if(eval_o.rc, "theta", eval_theta);
      set_if(eval_o.rc, "segment_duration", eval_seg_dur);
      set_if(eval_o.rc, "segment_overlap", eval_overlap);
      sssl::cli::cmd_eval(eval_o, std::cout);
    } else if (*cv) {
      cv_o.rc = resolve(cv_c);
      set_if(cv_o.rc, "segment_duration", cv_seg_dur);
      set_if(cv_o.rc, "segment_overlap", cv_overlap);
      set_if(cv_o.rc, "seed", cv_seed);
      set_if(cv_o.rc, "folds", cv_k);
      cv_o.k = cv_o.rc.folds;
      if (cv_baseline) cv_o.rc.set("baseline", "true");
      sssl::cli::cmd_cv(cv_o, std::cout);
    } else if (*pred) {
      pred_o.rc = resolve(pred_c);
      set_if(pred_o.rc, "segment_duration", pred_seg_dur);
      set_if(pred_o.rc, "segment_overlap", pred_overlap);
      sssl::cli::cmd_predict(pred_o, std::cout);
    }
  } catch (const sssl::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
