//
// Copyright 2026 The dpmf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// dpmf command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 divergence or retry
// limit. Settings come from flags, then the --config file (one INI section
// per subcommand), then built-in defaults.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "dpmf/dpmf.hpp"

namespace fs = std::filesystem;
using namespace dpmf;

namespace {

constexpr int kOk = 0, kUsage = 1, kData = 2, kDiverged = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaOptions {
  char delimiter = ',';
  int user_col = 0, item_col = 1, rating_col = 2;
  double rating_min = 1.0, rating_max = 5.0;
  bool netflix = false;

  void add(CLI::App* app) {
    app->add_option("--delimiter", delimiter, "field separator");
    app->add_option("--user-col", user_col, "0-based user id column");
    app->add_option("--item-col", item_col, "0-based item id column");
    app->add_option("--rating-col", rating_col, "0-based rating column");
    app->add_option("--rating-min", rating_min, "lowest valid rating");
    app->add_option("--rating-max", rating_max, "highest valid rating");
    app->add_flag("--netflix", netflix, "Netflix prize per-movie layout");
  }
  RatingRange range() const { return {rating_min, rating_max}; }
  RatingDataset read(const fs::path& path) const {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    if (netflix) return ingest_netflix(in, range());
    return ingest(in, TextSchema{delimiter, user_col, item_col, rating_col, range()});
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

fs::path with_suffix(const fs::path& base, const std::string& suffix) {
  return fs::path(base.string() + suffix);
}

std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// Maps a ratings file in source ids onto the dense ids of `users` / `items`.
// Ratings naming unknown ids are dropped and counted.
std::vector<RatingTriple> remap(const RatingDataset& ds, const std::vector<std::int64_t>& users,
                                const std::vector<std::int64_t>& items, std::size_t* dropped) {
  auto user_row = invert_ids(users), item_row = invert_ids(items);
  std::vector<RatingTriple> out;
  std::size_t lost = 0;
  for (const auto& t : ds.triples()) {
    auto u = user_row.find(ds.user_ids()[t.user]);
    auto j = item_row.find(ds.item_ids()[t.item]);
    if (u == user_row.end() || j == item_row.end()) {
      ++lost;
      continue;
    }
    out.push_back({u->second, j->second, t.rating});
  }
  if (dropped) *dropped = lost;
  return out;
}

std::vector<std::int64_t> identity_ids(std::size_t n) {
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i);
  return ids;
}

// ---- preprocess ----

struct PreprocessOptions {
  fs::path input, out;
  SchemaOptions schema;
  std::size_t tau = 100;
  double kappa = 1.0, rho = 1.0, epsilon = 1.0;
  std::vector<std::uint32_t> tiers{500, 4500};
  std::size_t block_users = 1000;
  std::uint64_t seed = 0;
  std::string bound_factor = "rating-span";
  bool shuffle = false;
};

int run_preprocess(const PreprocessOptions& o) {
  RatingDataset raw = o.schema.read(o.input);
  if (o.shuffle) raw = shuffle_users(raw, derive_seed(o.seed, "ingest-shuffle", 0));
  RatingDataset trimmed = trim(raw, o.tau, o.seed);
  auto weights = compute_weights(trimmed, o.tau, o.rho);
  auto budget = compute_budget(trimmed, o.tau, o.kappa, o.epsilon, weights,
                               parse_bound_factor(o.bound_factor), o.rho);
  auto plan = plan_tiers(trimmed, clamp_cutoffs(o.tiers, trimmed.n_items()));
  auto idx = write_blocks(trimmed, plan, o.block_users, o.out);
  write_text(with_suffix(o.out, ".budget.json"), json_text(budget_report(budget, trimmed.user_ids())));
  std::cerr << "preprocess: " << raw.size() << " ratings, " << trimmed.size() << " after trimming to tau="
            << o.tau << ", " << idx.blocks.size() << " blocks, B=" << budget.bound << "\n";
  for (std::size_t t = 0; t < plan.coverage.size(); ++t)
    std::cerr << "  tier " << t << " coverage " << plan.coverage[t] << "\n";
  return kOk;
}

// ---- train ----

struct TrainOptions {
  fs::path data, out, log, validation, budget;
  SchemaOptions schema;
  std::string solver = "sgd";
  std::size_t k = 16, epochs = 15, workers = 1, snapshot_every = 0;
  double eta0 = 0.02, gamma = 1.0, lambda = 5e-3, init_scale = 0.01;
  double zeta = 1.0, epsilon = 0.0, lambda_r = 1.0;
  std::size_t table_size = std::size_t{1} << 20;
  bool no_tiers = false;
  std::uint64_t seed = 0;
};

int run_train(const TrainOptions& o) {
  BlockFile file(o.data);
  const auto& meta = file.meta();
  std::vector<RatingTriple> validation;
  if (!o.validation.empty()) {
    std::size_t dropped = 0;
    validation = remap(o.schema.read(o.validation), meta.user_ids, meta.item_ids, &dropped);
    if (dropped) std::cerr << "train: " << dropped << " validation ratings name unknown ids\n";
  }
  auto m = init_model(meta.n_users, meta.n_items, o.k, o.init_scale, o.seed);
  const fs::path log_path = o.log.empty() ? with_suffix(o.out, ".log.csv") : o.log;
  const fs::path snap_path = with_suffix(o.out, ".partial");
  if (o.solver == "sgd") {
    SgdConfig cfg;
    cfg.eta0 = o.eta0;
    cfg.gamma = o.gamma;
    cfg.lambda = o.lambda;
    cfg.epochs = o.epochs;
    cfg.workers = o.workers;
    cfg.tiered_schedule = !o.no_tiers;
    cfg.snapshot_every = o.snapshot_every;
    if (o.snapshot_every) cfg.snapshot_path = snap_path;
    auto log = train(m, file, cfg, {}, validation);
    write_text(log_path, format_epoch_log(log));
  } else if (o.solver == "sgld") {
    const fs::path budget_path = o.budget.empty() ? with_suffix(o.data, ".budget.json") : o.budget;
    std::ifstream in(budget_path);
    if (!in) throw IoError("cannot open budget report " + budget_path.string());
    auto budget = budget_from_report(nlohmann::json::parse(in));
    if (budget.weights.size() != meta.n_users)
      throw DataError("budget report does not match the blocked dataset");
    if (o.epsilon > 0) budget = with_epsilon(budget, o.epsilon);
    SgldConfig cfg;
    cfg.eta0 = o.eta0;
    cfg.gamma = o.gamma;
    cfg.zeta = o.zeta;
    cfg.epochs = o.epochs;
    cfg.workers = o.workers;
    cfg.table_size = o.table_size;
    cfg.lambda_r = o.lambda_r;
    cfg.lambda = o.lambda;
    cfg.seed = derive_seed(o.seed, "sgld", 0);
    cfg.tiered_schedule = !o.no_tiers;
    cfg.snapshot_every = o.snapshot_every;
    if (o.snapshot_every) cfg.snapshot_path = snap_path;
    auto res = sample(m, file, budget, cfg, validation);
    write_text(log_path, format_trace(res.trace));
  } else {
    throw UsageError("--solver must be sgd or sgld");
  }
  save_snapshot(o.out, m, true, {meta.user_ids, meta.item_ids});
  std::cerr << "train: wrote " << o.out.string() << " and " << log_path.string() << "\n";
  return kOk;
}

// ---- dp-release ----

struct ReleaseOptions {
  fs::path input, out, validation;
  SchemaOptions schema;
  DpmfParams p;
  std::string bound_factor = "rating-span";
  bool exhaustive = false;
};

int run_release(ReleaseOptions o) {
  RatingDataset raw = o.schema.read(o.input);
  std::vector<RatingTriple> validation;
  if (!o.validation.empty()) {
    std::size_t dropped = 0;
    validation = remap(o.schema.read(o.validation), raw.user_ids(), raw.item_ids(), &dropped);
    if (dropped) std::cerr << "dp-release: " << dropped << " validation ratings name unknown ids\n";
  }
  o.p.factor = parse_bound_factor(o.bound_factor);
  if (o.exhaustive) o.p.constraint.scope = ConstraintScope::kExhaustive;
  auto r = run_dpmf(raw, o.p, validation);
  save_snapshot(o.out, r.released, false, {{}, r.item_ids});
  write_text(with_suffix(o.out, ".privacy.json"), json_text(report_json(r.report, r.user_ids)));
  write_text(with_suffix(o.out, ".trace.csv"), format_trace(r.trace));
  std::cerr << "dp-release: epsilon=" << r.report.epsilon << " B=" << r.report.bound
            << " retries=" << r.report.retries << ", wrote " << o.out.string() << "\n";
  return kOk;
}

// ---- recommend ----

struct RecommendOptions {
  fs::path model, ratings, out;
  SchemaOptions schema;
  std::size_t top = 10;
  double lambda = 0.1;
  std::vector<std::int64_t> users;
};

Snapshot load_items(const fs::path& path) {
  auto snap = load_snapshot(path);
  if (snap.ids.item_ids.empty()) snap.ids.item_ids = identity_ids(snap.model.n_items());
  return snap;
}

int run_recommend(const RecommendOptions& o) {
  auto snap = load_items(o.model);
  auto ds = o.schema.read(o.ratings);
  std::size_t dropped = 0;
  auto own = remap(ds, ds.user_ids(), snap.ids.item_ids, &dropped);
  if (dropped) std::cerr << "recommend: " << dropped << " ratings name items outside the model\n";
  auto mapped = RatingDataset::from_triples(ds.n_users(), snap.model.n_items(), std::move(own),
                                            ds.range(), ds.user_ids(), snap.ids.item_ids);
  std::ostringstream os;
  os.precision(10);
  os << "user,rank,item,score\n";
  for (std::size_t u = 0; u < mapped.n_users(); ++u) {
    const auto id = mapped.user_ids()[u];
    if (!o.users.empty() && std::find(o.users.begin(), o.users.end(), id) == o.users.end()) continue;
    auto mine = mapped.user_ratings(u);
    auto vec = local_fit(snap.model, mine, o.lambda);
    std::vector<std::uint32_t> rated;
    for (const auto& t : mine) rated.push_back(t.item);
    auto top = recommend_top_n(vec, snap.model, rated, o.top);
    for (std::size_t r = 0; r < top.size(); ++r)
      os << id << ',' << r + 1 << ',' << snap.ids.item_ids[top[r].item] << ',' << top[r].score << '\n';
  }
  if (o.out.empty()) std::cout << os.str();
  else write_text(o.out, os.str());
  return kOk;
}

// ---- evaluate ----

struct EvaluateOptions {
  fs::path model, input, test, out;
  SchemaOptions schema;
  double lambda = 0.1, test_fraction = 0.2;
  bool clip = false;
  std::uint64_t seed = 0;
};

int run_evaluate(const EvaluateOptions& o) {
  auto snap = load_items(o.model);
  auto ds = o.schema.read(o.input);
  std::size_t dropped = 0;
  auto mine = remap(ds, ds.user_ids(), snap.ids.item_ids, &dropped);
  auto mapped = RatingDataset::from_triples(ds.n_users(), snap.model.n_items(), std::move(mine),
                                            ds.range(), ds.user_ids(), snap.ids.item_ids);
  RatingDataset train_part;
  std::vector<RatingTriple> test;
  if (o.test.empty()) {
    auto split = split_per_user(mapped, o.test_fraction, derive_seed(o.seed, "split", 0));
    train_part = std::move(split.train);
    test = std::move(split.test);
  } else {
    std::size_t lost = 0;
    test = remap(o.schema.read(o.test), mapped.user_ids(), snap.ids.item_ids, &lost);
    dropped += lost;
    train_part = std::move(mapped);
  }
  if (dropped) std::cerr << "evaluate: " << dropped << " ratings name unknown ids\n";
  std::optional<RatingRange> clip;
  if (o.clip) clip = ds.range();
  const double value = evaluate_local(snap.model, train_part, test, o.lambda, clip);
  nlohmann::json j{{"rmse", value},
                   {"test_ratings", test.size()},
                   {"train_ratings", train_part.size()},
                   {"lambda", o.lambda}};
  if (o.out.empty()) std::cout << json_text(j);
  else write_text(o.out, json_text(j));
  return kOk;
}

// ---- bench ----

struct BenchOptions {
  fs::path input, out;
  SchemaOptions schema;
  std::vector<std::size_t> dims{16}, workers{1};
  std::vector<std::string> layouts{"tiered", "shuffled"};
  std::vector<std::uint32_t> tiers{500, 4500};
  std::size_t epochs = 1, block_users = 1000;
  std::uint64_t seed = 0;
};

// Items in random order, one tier: the layout without popularity locality.
TierPlan shuffled_plan(const RatingDataset& ds, std::uint64_t seed) {
  TierPlan plan;
  plan.order.resize(ds.n_items());
  std::iota(plan.order.begin(), plan.order.end(), 0u);
  auto rng = make_engine(seed, "bench-layout");
  std::shuffle(plan.order.begin(), plan.order.end(), rng);
  plan.rank.resize(ds.n_items());
  for (std::uint32_t p = 0; p < plan.order.size(); ++p) plan.rank[plan.order[p]] = p;
  plan.coverage = {1.0};
  return plan;
}

int run_bench(const BenchOptions& o) {
  auto ds = o.schema.read(o.input);
  std::ostringstream os;
  os.precision(8);
  os << "layout,dim,workers,epochs,ratings,seconds,ratings_per_sec\n";
  TierPlan tiered = plan_tiers(ds, clamp_cutoffs(o.tiers, ds.n_items()));
  for (const auto& layout : o.layouts) {
    if (layout != "tiered" && layout != "shuffled")
      throw UsageError("--layout must be tiered or shuffled");
    const bool is_tiered = layout == "tiered";
    TierPlan plan = is_tiered ? tiered : shuffled_plan(ds, o.seed);
    auto planned = apply_plan(ds, plan);
    InMemoryBlocks src(planned, o.block_users, plan.cutoffs);
    for (auto dim : o.dims)
      for (auto w : o.workers) {
        auto m = init_model(planned.n_users(), planned.n_items(), dim, 0.01, o.seed);
        SgdConfig cfg;
        cfg.eta0 = 1e-3;
        cfg.gamma = 0.0;
        cfg.epochs = o.epochs;
        cfg.workers = w;
        cfg.tiered_schedule = is_tiered;
        cfg.eval_objective = false;
        auto log = train(m, src, cfg);
        std::size_t ratings = 0;
        double seconds = 0;
        for (const auto& e : log.epochs) {
          ratings += e.ratings;
          seconds += e.seconds;
        }
        os << layout << ',' << dim << ',' << w << ',' << o.epochs << ',' << ratings << ',' << seconds
           << ',' << (seconds > 0 ? static_cast<double>(ratings) / seconds : 0.0) << '\n';
      }
  }
  os << "\ntier,first_item,end_item,coverage\n";
  std::uint32_t first = 0;
  for (std::size_t t = 0; t < tiered.coverage.size(); ++t) {
    std::uint32_t end = t < tiered.cutoffs.size() ? tiered.cutoffs[t]
                                                   : static_cast<std::uint32_t>(ds.n_items());
    os << t << ',' << first << ',' << end << ',' << tiered.coverage[t] << '\n';
    first = end;
  }
  if (o.out.empty()) std::cout << os.str();
  else write_text(o.out, os.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpmf: private and non-private matrix factorization"};
  app.set_config("--config", "", "INI file with one section per subcommand");
  app.require_subcommand(1);

  PreprocessOptions pre;
  auto* p = app.add_subcommand("preprocess", "trim, weight, tier and block a ratings file");
  p->add_option("input,--input", pre.input, "ratings file")->required()->check(CLI::ExistingFile);
  p->add_option("--out", pre.out, "output base path (<out>.bin, <out>.idx, <out>.budget.json)")
      ->required();
  pre.schema.add(p);
  p->add_option("--tau", pre.tau, "per-user rating cap")->check(CLI::PositiveNumber);
  p->add_option("--kappa", pre.kappa, "prediction slack beyond the rating range");
  p->add_option("--rho", pre.rho, "upper weight");
  p->add_option("--epsilon", pre.epsilon, "privacy loss used for the per-user report");
  p->add_option("--tiers", pre.tiers, "cumulative tier cutoffs")->delimiter(',');
  p->add_option("--block-users", pre.block_users, "users per block")->check(CLI::PositiveNumber);
  p->add_option("--bound-factor", pre.bound_factor, "rating-span | five-star-span | upper-magnitude");
  p->add_flag("--shuffle-users", pre.shuffle, "randomly relabel users before blocking");
  p->add_option("--seed", pre.seed, "random seed");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "fit a model on a blocked dataset");
  t->add_option("data,--data", tr.data, "blocked dataset base path")->required();
  t->add_option("--out", tr.out, "model snapshot path")->required();
  t->add_option("--log", tr.log, "epoch log path (default <out>.log.csv)");
  t->add_option("--validation", tr.validation, "held-out ratings file")->check(CLI::ExistingFile);
  tr.schema.add(t);
  t->add_option("--solver", tr.solver, "sgd | sgld")->check(CLI::IsMember({"sgd", "sgld"}));
  t->add_option("--budget", tr.budget, "budget report for sgld (default <data>.budget.json)");
  t->add_option("-k,--dims", tr.k, "latent dimension")->check(CLI::PositiveNumber);
  t->add_option("--epochs", tr.epochs, "passes over the data");
  t->add_option("--workers", tr.workers, "worker threads")->check(CLI::PositiveNumber);
  t->add_option("--eta0", tr.eta0, "initial step size");
  t->add_option("--gamma", tr.gamma, "step decay exponent");
  t->add_option("--lambda", tr.lambda, "regularizer (sgld: prior precision before scaling)");
  t->add_option("--lambda-r", tr.lambda_r, "sgld likelihood precision before scaling");
  t->add_option("--init-scale", tr.init_scale, "standard deviation of the initial factors");
  t->add_option("--zeta", tr.zeta, "sgld noise temperature");
  t->add_option("--epsilon", tr.epsilon, "sgld privacy loss (default: the budget report's)");
  t->add_option("--table-size", tr.table_size, "gaussian table entries, 0 for a direct generator");
  t->add_option("--snapshot-every", tr.snapshot_every, "blocks between snapshots to <out>.partial");
  t->add_flag("--no-tiers", tr.no_tiers, "process block ratings in stored order");
  t->add_option("--seed", tr.seed, "random seed");

  ReleaseOptions rel;
  rel.p.sgld.eta0 = 5e-6;
  rel.p.sgld.gamma = 0.0;
  auto* d = app.add_subcommand("dp-release", "sample a private model and release the item factors");
  d->add_option("input,--input", rel.input, "ratings file")->required()->check(CLI::ExistingFile);
  d->add_option("--out", rel.out, "released item snapshot path")->required();
  d->add_option("--epsilon", rel.p.epsilon, "user-level privacy loss")->required();
  d->add_option("--validation", rel.validation, "held-out ratings file")->check(CLI::ExistingFile);
  rel.schema.add(d);
  d->add_option("--tau", rel.p.tau, "per-user rating cap")->check(CLI::PositiveNumber);
  d->add_option("--kappa", rel.p.kappa, "prediction slack beyond the rating range");
  d->add_option("--rho", rel.p.rho, "upper weight");
  d->add_option("--bound-factor", rel.bound_factor, "rating-span | five-star-span | upper-magnitude");
  d->add_flag("--worst-case-bound", rel.p.worst_case_bound, "use B = tau * factor");
  d->add_option("-k,--dims", rel.p.k, "latent dimension")->check(CLI::PositiveNumber);
  d->add_option("--init-scale", rel.p.init_scale, "standard deviation of the initial factors");
  d->add_option("--retry-limit", rel.p.retry_limit, "attempts before giving up");
  d->add_option("--block-users", rel.p.users_per_block, "users per block")->check(CLI::PositiveNumber);
  d->add_option("--tiers", rel.p.tier_cutoffs, "cumulative tier cutoffs")->delimiter(',');
  d->add_option("--constraint-pairs", rel.p.constraint.sampled_pairs, "unobserved pairs checked");
  d->add_flag("--exhaustive-constraint", rel.exhaustive, "check every user-item pair");
  d->add_option("--epochs", rel.p.sgld.epochs, "passes over the data");
  d->add_option("--workers", rel.p.sgld.workers, "worker threads")->check(CLI::PositiveNumber);
  d->add_option("--eta0", rel.p.sgld.eta0, "initial step size");
  d->add_option("--gamma", rel.p.sgld.gamma, "step decay exponent");
  d->add_option("--zeta", rel.p.sgld.zeta, "noise temperature");
  d->add_option("--lambda", rel.p.sgld.lambda, "prior precision before scaling");
  d->add_option("--lambda-r", rel.p.sgld.lambda_r, "likelihood precision before scaling");
  d->add_option("--table-size", rel.p.sgld.table_size, "gaussian table entries, 0 for a direct generator");
  d->add_option("--seed", rel.p.seed, "random seed");

  RecommendOptions rec;
  auto* r = app.add_subcommand("recommend", "fit users locally against released items and rank");
  r->add_option("--model", rec.model, "item snapshot")->required()->check(CLI::ExistingFile);
  r->add_option("ratings,--ratings", rec.ratings, "the users' own ratings")
      ->required()
      ->check(CLI::ExistingFile);
  r->add_option("--out", rec.out, "output path (default stdout)");
  rec.schema.add(r);
  r->add_option("--top", rec.top, "items per user");
  r->add_option("--lambda", rec.lambda, "local ridge regularizer");
  r->add_option("--user", rec.users, "only these user ids")->delimiter(',');

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "local-fit RMSE of held-out ratings");
  e->add_option("--model", ev.model, "item snapshot")->required()->check(CLI::ExistingFile);
  e->add_option("input,--input", ev.input, "ratings used for the local fits")
      ->required()
      ->check(CLI::ExistingFile);
  e->add_option("--test", ev.test, "held-out ratings (default: split --input per user)")
      ->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "output path (default stdout)");
  ev.schema.add(e);
  e->add_option("--lambda", ev.lambda, "local ridge regularizer");
  e->add_option("--test-fraction", ev.test_fraction, "fraction of each user's ratings held out");
  e->add_flag("--clip", ev.clip, "clip predictions to the rating range");
  e->add_option("--seed", ev.seed, "random seed");

  BenchOptions be;
  auto* b = app.add_subcommand("bench", "SGD throughput by dimension, workers and item layout");
  b->add_option("input,--input", be.input, "ratings file")->required()->check(CLI::ExistingFile);
  b->add_option("--out", be.out, "output path (default stdout)");
  be.schema.add(b);
  b->add_option("--dims", be.dims, "latent dimensions")->delimiter(',');
  b->add_option("--workers", be.workers, "worker counts")->delimiter(',');
  b->add_option("--layout", be.layouts, "tiered | shuffled")->delimiter(',');
  b->add_option("--tiers", be.tiers, "cumulative tier cutoffs")->delimiter(',');
  b->add_option("--epochs", be.epochs, "passes per measurement")->check(CLI::PositiveNumber);
  b->add_option("--block-users", be.block_users, "users per block")->check(CLI::PositiveNumber);
  b->add_option("--seed", be.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*p) return run_preprocess(pre);
    if (*t) return run_train(tr);
    if (*d) return run_release(rel);
    if (*r) return run_recommend(rec);
    if (*e) return run_evaluate(ev);
    if (*b) return run_bench(be);
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const SingularSystemError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const nlohmann::json::exception& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const DivergenceError& err) {
    std::cerr << "diverged: " << err.what() << "\n";
    return kDiverged;
  } catch (const RetryLimitError& err) {
    std::cerr << "retry limit: " << err.what() << "\n";
    return kDiverged;
  } catch (const std::invalid_argument& err) {
    std::cerr << "usage error: " << err.what() << "\n" << app.help();
    return kUsage;
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
