// Command-line front end: weight generation, dataset sampling, direction
// training, interventions, interpolation, and dissection. Every command is a
// pure function of its inputs and flags; reports embed the resolved config,
// the tool version, and checksums of all input files.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ssp/dissect.hpp"
#include "ssp/directions.hpp"
#include "ssp/intervene.hpp"
#include "ssp/io.hpp"
#include "ssp/metrics.hpp"
#include "ssp/sampling.hpp"
#include "ssp/stylegen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ssp;

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw TensorError(msg);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  require(f.good(), "cannot write " + path);
}

void write_report(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

void copy_bytes(const std::string& from, const std::string& to) {
  std::ifstream in(from, std::ios::binary);
  require(in.good(), "cannot read " + from);
  std::stringstream buf;
  buf << in.rdbuf();
  write_text(to, buf.str());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json layout_json(const StyleLayout& layout) {
  json arr = json::array();
  for (const StyleSlice& sl : layout.slices)
    arr.push_back({{"layer", sl.layer}, {"offset", sl.offset}, {"length", sl.length}});
  return arr;
}

StyleLayout layout_from_json(const json& arr) {
  StyleLayout layout;
  for (const json& j : arr) {
    layout.slices.push_back({j.at("layer"), j.at("offset"), j.at("length")});
    layout.total += layout.slices.back().length;
  }
  return layout;
}

Tensor vec_tensor(const std::vector<double>& v) {
  Tensor t({static_cast<int>(v.size())});
  t.data = v;
  return t;
}

std::vector<double> parse_t_list(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      require(used == item.size(), "bad t value: " + item);
    } catch (const std::logic_error&) {
      throw TensorError("bad t value: " + item);
    }
  }
  require(!out.empty(), "empty t list");
  return out;
}

json metrics_row(const Image& a, const Image& b, const Tensor& mask) {
  return {{"mse", mse(a, b)},
          {"masked_mse", masked_mse(a, b, mask, MaskRegion::Outside)},
          {"ssim", ssim(a, b)},
          {"id", nullptr}};  // identity metric not meaningful on toy images
}

// ---------------------------------------------------------------------------

struct GenWeightsOpts {
  std::uint64_t seed = 7;
  std::string backend = "planted";
  int d_z = 32, d_w = 32;
  std::string out;
};

void run_gen_weights(const GenWeightsOpts& o) {
  json config = {{"seed", o.seed}, {"backend", o.backend}, {"d_z", o.d_z},
                 {"d_w", o.d_w},   {"out", o.out}};
  if (o.backend == "planted") {
    require(o.d_z == 32 && o.d_w == 32, "planted backend uses the fixed architecture");
    const PlantedGenerator pg = build_planted_generator(o.seed);
    save_generator(o.out, pg.weights, &pg.partitions, &pg.attributes);
  } else {
    ArchSpec arch;
    arch.d_z = o.d_z;
    arch.d_w = o.d_w;
    save_generator(o.out, build_random_generator(o.seed, arch));
  }
  write_report(o.out + ".json", {{"command", "gen-weights"},
                                 {"tool_version", kToolVersion},
                                 {"config", config},
                                 {"outputs", {{"weights", file_checksum(o.out)}}}});
}

struct SampleOpts {
  std::string weights;
  int n = 2000;
  std::uint64_t seed = 7;
  int jobs = 1;
  std::string out;
};

void run_sample(const SampleOpts& o) {
  const LoadedGenerator lg = load_generator(o.weights);
  const StyleLayout layout = StyleLayout::from_arch(lg.weights.arch);

  std::vector<LatentVector> zs(o.n);
  std::vector<GenerateResult> rs(o.n);
  auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      zs[i] = sample_latent(lg.weights.arch.d_z, o.seed, static_cast<std::uint64_t>(i));
      rs[i] = generate(lg.weights, zs[i]);
    }
  };
  if (o.jobs <= 1 || o.n < 2) {
    work(0, o.n);
  } else {
    const int jobs = std::min(o.jobs, o.n);
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
      const int lo = static_cast<int>(static_cast<long long>(o.n) * t / jobs);
      const int hi = static_cast<int>(static_cast<long long>(o.n) * (t + 1) / jobs);
      pool.emplace_back(work, lo, hi);
    }
    for (std::thread& t : pool) t.join();
  }

  fs::create_directories(o.out);
  NamedTensors ts;
  json labels = json::array();
  for (int i = 0; i < o.n; ++i) {
    const std::string idx = std::to_string(i);
    ts.emplace_back("z/" + idx, vec_tensor(zs[i].values));
    ts.emplace_back("w/" + idx, vec_tensor(rs[i].w));
    ts.emplace_back("s/" + idx, vec_tensor(rs[i].s.values));
    json row = json::array();
    for (const AttributeSpec& attr : lg.attributes)
      row.push_back(planted_label(attr, lg.partitions[attr.partition_index], rs[i].image));
    labels.push_back(row);
  }
  save_tensors((fs::path(o.out) / "samples.siv").string(), ts);

  json attrs = json::array();
  for (const AttributeSpec& attr : lg.attributes)
    attrs.push_back({{"id", attr.id},
                     {"name", attr.name},
                     {"partition_index", attr.partition_index},
                     {"rgb_channel", attr.rgb_channel},
                     {"threshold", attr.threshold}});
  write_report((fs::path(o.out) / "dataset.json").string(),
               {{"command", "sample"},
                {"tool_version", kToolVersion},
                {"config",
                 {{"weights", o.weights}, {"n", o.n}, {"seed", o.seed},
                  {"jobs", o.jobs}, {"out", o.out}}},
                {"inputs", {{"weights", file_checksum(o.weights)}}},
                {"d_z", lg.weights.arch.d_z},
                {"layout", layout_json(layout)},
                {"attributes", attrs},
                {"labels", labels}});
}

struct TrainOpts {
  std::string dataset;
  std::string space = "s";
  int attr = 0;
  double l1 = 1e-3;
  double hinge_c = 1.0;
  int epochs = 200;
  std::uint64_t seed = 7;
  std::string out;
};

void run_train_direction(const TrainOpts& o) {
  const std::string samples_path = (fs::path(o.dataset) / "samples.siv").string();
  const std::string header_path = (fs::path(o.dataset) / "dataset.json").string();
  std::ifstream hf(header_path);
  require(hf.good(), "cannot read " + header_path);
  const json header = json::parse(hf);
  const NamedTensors ts = load_tensors(samples_path);

  int attr_pos = -1;
  const json& attrs = header.at("attributes");
  for (std::size_t i = 0; i < attrs.size(); ++i)
    if (attrs[i].at("id") == o.attr) attr_pos = static_cast<int>(i);
  require(attr_pos >= 0, "dataset has no attribute with id " + std::to_string(o.attr));

  const json& labels = header.at("labels");
  const int n = static_cast<int>(labels.size());
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (int i = 0; i < n; ++i) {
    xs.push_back(find_tensor(ts, o.space + "/" + std::to_string(i)).data);
    ys.push_back(labels[i].at(attr_pos));
  }

  TrainOptions opts;
  opts.space = space_from_name(o.space);
  opts.l1_lambda = o.l1;
  opts.hinge_c = o.hinge_c;
  opts.epochs = o.epochs;
  opts.seed = o.seed;
  if (opts.space == Space::S) opts.layout = layout_from_json(header.at("layout"));
  const auto [plane, report] = train_hyperplane(xs, ys, opts);
  save_hyperplane(o.out, plane);

  int nonzeros = 0;
  for (double v : plane.normal) nonzeros += v != 0.0;
  write_report(o.out + ".json",
               {{"command", "train-direction"},
                {"tool_version", kToolVersion},
                {"config",
                 {{"dataset", o.dataset}, {"space", o.space}, {"attr", o.attr},
                  {"l1_lambda", o.l1}, {"hinge_c", o.hinge_c}, {"epochs", o.epochs},
                  {"seed", o.seed}, {"out", o.out}}},
                {"inputs",
                 {{"samples", file_checksum(samples_path)},
                  {"dataset", file_checksum(header_path)}}},
                {"report",
                 {{"train_accuracy", report.train_accuracy},
                  {"validation_accuracy", report.validation_accuracy},
                  {"sparsity", report.sparsity},
                  {"per_layer_nonzeros", report.per_layer_nonzeros}}},
                {"plane",
                 {{"space", space_name(plane.space)}, {"bias", plane.bias},
                  {"dim", plane.normal.size()}, {"nonzeros", nonzeros}}}});
}

struct InterveneOpts {
  std::string weights, dir_z, dir_s;
  int sample_index = 0;
  std::uint64_t seed = 7;
  int attr = 0;
  std::string mask = "concept";
  double beta = 3.0;
  double lattr = 1e-2;
  double lnorm = 1e-6;
  int steps = 200;
  double lr = 0.05;
  double direction_scale = 0.0;
  bool per_layer_scalar = false;
  bool joint = false;
  std::string orient = "auto";
  double tol = 1e-3;
  std::string out;
};

void run_intervene(const InterveneOpts& o) {
  const LoadedGenerator lg = load_generator(o.weights);
  const Hyperplane plane_z = load_hyperplane(o.dir_z);
  const Hyperplane plane_s = load_hyperplane(o.dir_s);

  const LatentVector z =
      sample_latent(lg.weights.arch.d_z, o.seed, static_cast<std::uint64_t>(o.sample_index));
  const GenerateResult g = generate(lg.weights, z);

  const AttributeSpec* attr_spec = nullptr;
  const ChannelPartition* part = nullptr;
  int label = 0;
  if (o.attr >= 0 && o.attr < static_cast<int>(lg.attributes.size())) {
    attr_spec = &lg.attributes[o.attr];
    part = &lg.partitions[attr_spec->partition_index];
    label = planted_label(*attr_spec, *part, g.image);
  }

  // "auto" edits toward the opposite class of the sample's current label.
  double beta_eff = o.beta;
  std::vector<double> dsn = direction_in_space(plane_s);
  if (o.orient == "auto" && label != 0) {
    beta_eff = label == 1 ? -std::abs(o.beta) : std::abs(o.beta);
    if (label == 1)
      for (double& v : dsn) v = -v;
  }
  const ZEditResult ze = z_edit(plane_z, lg.weights, z, beta_eff);

  Tensor mask;
  json mask_checksum = nullptr;
  if (o.mask == "concept") {
    require(part != nullptr, "no concept partition for attribute " + std::to_string(o.attr));
    mask = segmentation_mask(*part);
  } else {
    mask = find_tensor(load_tensors(o.mask), "mask");
    mask_checksum = file_checksum(o.mask);
  }

  Schedule sched;
  sched.steps_per_layer = o.steps;
  sched.lr = o.lr;
  sched.direction_scale = o.direction_scale;
  sched.per_layer_scalar = o.per_layer_scalar;
  sched.layerwise = !o.joint;
  const LossWeights lw{o.lattr, o.lnorm};
  const InterventionResult res = optimize(lg.weights, g.s, ze.delta_s_z, dsn, mask, lw, sched);

  StyleCode s_hat = g.s;
  for (std::size_t i = 0; i < s_hat.values.size(); ++i)
    s_hat.values[i] += res.merged_displacement[i];
  const VerifyReport vr = verify_edit(plane_s, g.s, s_hat, part, o.tol);

  fs::create_directories(o.out);
  const fs::path dir(o.out);
  copy_bytes(o.weights, (dir / "weights.siv").string());

  NamedTensors result_ts;
  result_ts.emplace_back("s", vec_tensor(g.s.values));
  result_ts.emplace_back("delta_s_z", vec_tensor(ze.delta_s_z));
  result_ts.emplace_back("delta_s_n_scaled", vec_tensor(res.direction_scaled));
  result_ts.emplace_back("lambda", vec_tensor(res.coeffs.values));
  result_ts.emplace_back("merged", vec_tensor(res.merged_displacement));
  save_tensors((dir / "result.siv").string(), result_ts);

  const Image original = synthesize(lg.weights, g.s);
  NamedTensors image_ts;
  image_ts.emplace_back("original", original);
  image_ts.emplace_back("z_edit", res.z_edit_image);
  image_ts.emplace_back("final", res.final_image);
  write_ppm((dir / "original.ppm").string(), original);
  write_ppm((dir / "z_edit.ppm").string(), res.z_edit_image);
  write_ppm((dir / "final.ppm").string(), res.final_image);
  for (std::size_t k = 0; k < res.per_layer_images.size(); ++k) {
    image_ts.emplace_back("layer/" + std::to_string(k), res.per_layer_images[k]);
    write_ppm((dir / ("layer_" + std::to_string(k) + ".ppm")).string(), res.per_layer_images[k]);
  }
  save_tensors((dir / "images.siv").string(), image_ts);

  std::string csv = "layer,step,pix,attr,norm,total,outside_mse\n";
  for (const TrajectoryPoint& pt : res.trajectory)
    csv += std::to_string(pt.layer) + "," + std::to_string(pt.step) + "," + fmt(pt.loss.pix) +
           "," + fmt(pt.loss.attr) + "," + fmt(pt.loss.norm) + "," + fmt(pt.loss.total) + "," +
           fmt(pt.outside_mse) + "\n";
  write_text((dir / "trajectory.csv").string(), csv);

  write_report(
      (dir / "report.json").string(),
      {{"command", "intervene"},
       {"tool_version", kToolVersion},
       {"config",
        {{"weights", o.weights}, {"dir_z", o.dir_z}, {"dir_s", o.dir_s},
         {"sample_index", o.sample_index}, {"seed", o.seed}, {"attr", o.attr},
         {"mask", o.mask}, {"beta", o.beta}, {"beta_effective", beta_eff},
         {"label", label}, {"orient", o.orient}, {"lattr", o.lattr}, {"lnorm", o.lnorm},
         {"steps", o.steps}, {"lr", o.lr}, {"direction_scale", o.direction_scale},
         {"per_layer_scalar", o.per_layer_scalar}, {"joint", o.joint}, {"tol", o.tol},
         {"out", o.out}}},
       {"inputs",
        {{"weights", file_checksum(o.weights)}, {"dir_z", file_checksum(o.dir_z)},
         {"dir_s", file_checksum(o.dir_s)}, {"mask", mask_checksum}}},
       {"metrics",
        {{"z_edit", metrics_row(original, res.z_edit_image, mask)},
         {"final", metrics_row(original, res.final_image, mask)}}},
       {"verify",
        {{"sign_flip", vr.sign_flip}, {"off_concept_checked", vr.off_concept_checked},
         {"off_concept_preserved", vr.off_concept_preserved},
         {"score_original", vr.score_original}, {"score_edited", vr.score_edited},
         {"max_off_concept_delta", vr.max_off_concept_delta}}},
       {"initial_outside_mse", res.initial_outside_mse},
       {"per_layer_outside_mse", res.per_layer_outside_mse}});
}

struct InterpolateOpts {
  std::string result;
  std::string t_list = "0,0.25,0.5,0.75,1";
  std::string out;
};

void run_interpolate(const InterpolateOpts& o) {
  const fs::path rdir(o.result);
  const std::string weights_path = (rdir / "weights.siv").string();
  const std::string result_path = (rdir / "result.siv").string();
  const LoadedGenerator lg = load_generator(weights_path);
  const NamedTensors rt = load_tensors(result_path);

  StyleCode s;
  s.layout = StyleLayout::from_arch(lg.weights.arch);
  s.values = find_tensor(rt, "s").data;
  const std::vector<double> dsz = find_tensor(rt, "delta_s_z").data;
  const std::vector<double> dsn = find_tensor(rt, "delta_s_n_scaled").data;
  InterventionCoeffs coeffs;
  coeffs.layout = s.layout;
  coeffs.values = find_tensor(rt, "lambda").data;

  const std::vector<double> ts = parse_t_list(o.t_list);
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  NamedTensors image_ts;
  json points = json::array();
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const Image img = interpolate(lg.weights, s, dsz, dsn, coeffs, ts[k]);
    image_ts.emplace_back("t/" + std::to_string(k), img);
    write_ppm((dir / ("interp_" + std::to_string(k) + ".ppm")).string(), img);
    points.push_back({{"index", k}, {"t", ts[k]}});
  }
  save_tensors((dir / "interp.siv").string(), image_ts);
  write_report((dir / "report.json").string(),
               {{"command", "interpolate"},
                {"tool_version", kToolVersion},
                {"config", {{"result", o.result}, {"t_list", o.t_list}, {"out", o.out}}},
                {"inputs",
                 {{"weights", file_checksum(weights_path)},
                  {"result", file_checksum(result_path)}}},
                {"points", points}});
}

struct DissectOpts {
  std::string weights;
  int samples = 16;
  double fraction = 0.05;
  std::uint64_t seed = 7;
  std::string out;
};

void run_dissect(const DissectOpts& o) {
  const LoadedGenerator lg = load_generator(o.weights);
  require(!lg.partitions.empty(), "weight file carries no concept partitions");
  std::vector<LatentVector> zs;
  for (int i = 0; i < o.samples; ++i)
    zs.push_back(sample_latent(lg.weights.arch.d_z, o.seed, static_cast<std::uint64_t>(i)));
  const DissectionReport dr =
      dissect_generator(lg.weights, zs, lg.partitions, o.fraction, lg.weights.arch.upsample);

  json channels = json::array();
  for (const ChannelIou& ch : dr.channels)
    channels.push_back(
        {{"layer", ch.layer}, {"channel", ch.channel}, {"iou", ch.iou_per_concept}});
  json ranking = json::array();
  for (const auto& per_concept : dr.ranking) {
    json r = json::array();
    for (const auto& [layer, channel] : per_concept) r.push_back({layer, channel});
    ranking.push_back(r);
  }
  write_report(o.out, {{"command", "dissect"},
                       {"tool_version", kToolVersion},
                       {"config",
                        {{"weights", o.weights}, {"samples", o.samples},
                         {"fraction", o.fraction}, {"seed", o.seed}, {"out", o.out}}},
                       {"inputs", {{"weights", file_checksum(o.weights)}}},
                       {"fraction", dr.fraction},
                       {"channels", channels},
                       {"ranking", ranking}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse style-space attribute directions and local interventions"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.set_config("--config");
  app.require_subcommand(1);

  GenWeightsOpts gw;
  CLI::App* c_gw = app.add_subcommand("gen-weights", "Build and save generator weights");
  c_gw->add_option("--seed", gw.seed);
  c_gw->add_option("--backend", gw.backend)->check(CLI::IsMember({"random", "planted"}));
  c_gw->add_option("--d-z", gw.d_z);
  c_gw->add_option("--d-w", gw.d_w);
  c_gw->add_option("--out", gw.out)->required();

  SampleOpts sm;
  CLI::App* c_sm = app.add_subcommand("sample", "Render a labeled dataset");
  c_sm->add_option("--weights", sm.weights)->required();
  c_sm->add_option("--n", sm.n)->check(CLI::NonNegativeNumber);
  c_sm->add_option("--seed", sm.seed);
  c_sm->add_option("--jobs", sm.jobs)->check(CLI::PositiveNumber);
  c_sm->add_option("--out", sm.out)->required();

  TrainOpts tr;
  CLI::App* c_tr = app.add_subcommand("train-direction", "Train a sparse attribute hyperplane");
  c_tr->add_option("--dataset", tr.dataset)->required();
  c_tr->add_option("--space", tr.space)->check(CLI::IsMember({"z", "w", "s"}));
  c_tr->add_option("--attr", tr.attr);
  c_tr->add_option("--l1", tr.l1);
  c_tr->add_option("--hinge-c", tr.hinge_c);
  c_tr->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
  c_tr->add_option("--seed", tr.seed);
  c_tr->add_option("--out", tr.out)->required();

  InterveneOpts iv;
  CLI::App* c_iv = app.add_subcommand("intervene", "Optimize a local style intervention");
  c_iv->add_option("--weights", iv.weights)->required();
  c_iv->add_option("--dir-z", iv.dir_z)->required();
  c_iv->add_option("--dir-s", iv.dir_s)->required();
  c_iv->add_option("--sample-index", iv.sample_index)->check(CLI::NonNegativeNumber);
  c_iv->add_option("--seed", iv.seed);
  c_iv->add_option("--attr", iv.attr);
  c_iv->add_option("--mask", iv.mask);
  c_iv->add_option("--beta", iv.beta);
  c_iv->add_option("--lattr", iv.lattr);
  c_iv->add_option("--lnorm", iv.lnorm);
  c_iv->add_option("--steps", iv.steps)->check(CLI::NonNegativeNumber);
  c_iv->add_option("--lr", iv.lr);
  c_iv->add_option("--direction-scale", iv.direction_scale);
  c_iv->add_flag("--per-layer-scalar", iv.per_layer_scalar);
  c_iv->add_flag("--joint", iv.joint);
  c_iv->add_option("--orient", iv.orient)->check(CLI::IsMember({"auto", "fixed"}));
  c_iv->add_option("--tol", iv.tol);
  c_iv->add_option("--out", iv.out)->required();

  InterpolateOpts ip;
  CLI::App* c_ip = app.add_subcommand("interpolate", "Interpolate along the attribute direction");
  c_ip->add_option("--result", ip.result)->required();
  c_ip->add_option("--t-list", ip.t_list);
  c_ip->add_option("--out", ip.out)->required();

  DissectOpts ds;
  CLI::App* c_ds = app.add_subcommand("dissect", "Rank channels by concept IoU");
  c_ds->add_option("--weights", ds.weights)->required();
  c_ds->add_option("--samples", ds.samples)->check(CLI::PositiveNumber);
  c_ds->add_option("--fraction", ds.fraction);
  c_ds->add_option("--seed", ds.seed);
  c_ds->add_option("--out", ds.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_gw->parsed()) run_gen_weights(gw);
    if (c_sm->parsed()) run_sample(sm);
    if (c_tr->parsed()) run_train_direction(tr);
    if (c_iv->parsed()) run_intervene(iv);
    if (c_ip->parsed()) run_interpolate(ip);
    if (c_ds->parsed()) run_dissect(ds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
