#include "latentprobe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "latentprobe/text.hpp"

namespace latentprobe {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> distance_of(const PairAggregate& p, const std::string& model) {
  if (model == kLatentMetric) return p.latent_distance;
  const auto it = p.distances.find(model);
  if (it == p.distances.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> models_of(const std::vector<PairAggregate>& pairs) {
  std::set<std::string> models;
  for (const auto& p : pairs) {
    for (const auto& [m, d] : p.distances) models.insert(m);
  }
  return {models.begin(), models.end()};
}

/// Linear interpolation between order statistics (the common "type 7" rule).
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double sublevel_value(const std::string& s) { return parse_number(s).value_or(0.0); }

}  // namespace

std::optional<double> AnalysisConfig::threshold_for(const std::string& model) const {
  if (const auto it = thresholds.find(model); it != thresholds.end()) return it->second;
  return default_threshold(model);
}

Aggregates aggregate(const PairIndex& pairs, const std::vector<Rating>& ratings, const ScoreTable& scores) {
  std::map<std::string, PairAggregate> by_pair;
  for (const auto& r : ratings) {
    const auto info = pairs.find(r.pair_id);
    if (info == pairs.end()) throw ValidationError("rating of unknown pair '" + r.pair_id + "'");
    if (r.similarity < 0 || r.similarity > 100) throw ValidationError("similarity outside [0, 100]");
    auto& a = by_pair[r.pair_id];
    a.n += 1;
    a.similarity_sum += r.similarity;
    a.similarity_square_sum += static_cast<long long>(r.similarity) * r.similarity;
    a.same_count += r.same_person ? 1 : 0;
  }
  for (const auto& rec : scores.records()) {
    const auto it = by_pair.find(rec.pair_id);
    if (it == by_pair.end()) continue;
    if (rec.model_name == kLatentMetric) {
      if (rec.distance) it->second.latent_distance = *rec.distance;
    } else {
      it->second.distances[rec.model_name] = rec.distance;
    }
  }

  Aggregates out;
  for (const auto& [id, info] : pairs) {
    const auto it = by_pair.find(id);
    if (it == by_pair.end()) {
      out.unrated.push_back(id);
      continue;
    }
    auto a = std::move(it->second);
    const bool latent_scored = scores.find(id, std::string(kLatentMetric)).value_or(std::nullopt).has_value();
    if (!latent_scored) a.latent_distance = info.latent_distance;
    a.pair_id = id;
    a.batch_id = info.batch_id;
    a.type = info.type;
    a.sublevel = info.sublevel;
    const auto n = static_cast<long long>(a.n);
    a.mean_similarity = static_cast<double>(a.similarity_sum) / static_cast<double>(n);
    a.identity_fraction = static_cast<double>(a.same_count) / static_cast<double>(n);
    if (n >= 2) {
      // exact integer numerators; same_person is 0/1 so its square sum equals its sum
      const auto sim_num = n * a.similarity_square_sum - a.similarity_sum * a.similarity_sum;
      const auto id_num = n * a.same_count - a.same_count * a.same_count;
      const auto den = static_cast<double>(n * (n - 1));
      a.similarity_sd = std::sqrt(static_cast<double>(sim_num) / den);
      a.identity_sd = std::sqrt(static_cast<double>(id_num) / den);
    }
    out.pairs.push_back(std::move(a));
  }
  return out;
}

std::optional<double> acceptance_rate(const std::vector<PairAggregate>& pairs, const std::string& model,
                                      double threshold) {
  std::size_t n = 0, accepted = 0;
  for (const auto& p : pairs) {
    const auto d = distance_of(p, model);
    if (!d) continue;
    ++n;
    accepted += accept(threshold, *d) ? 1 : 0;
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(accepted) / static_cast<double>(n);
}

std::vector<SummaryRow> summarize(const std::vector<PairAggregate>& pairs, const AnalysisConfig& config) {
  const auto models = models_of(pairs);
  auto make_row = [&](std::string type, std::string sublevel, const std::vector<const PairAggregate*>& group) {
    SummaryRow row{std::move(type), std::move(sublevel), group.size(), 0, 0.0, 0.0, 0.0, {}};
    long long sim = 0, same = 0;
    double latent = 0.0;
    for (const auto* p : group) {
      row.n_ratings += p->n;
      sim += p->similarity_sum;
      same += p->same_count;
      latent += p->latent_distance;
    }
    if (row.n_ratings > 0) {
      row.mean_similarity = static_cast<double>(sim) / static_cast<double>(row.n_ratings);
      row.mean_identity = static_cast<double>(same) / static_cast<double>(row.n_ratings);
    }
    if (!group.empty()) row.mean_latent_distance = latent / static_cast<double>(group.size());
    for (const auto& m : models) {
      ModelSummary s;
      double sum = 0.0;
      std::size_t accepted = 0;
      const auto threshold = config.threshold_for(m);
      for (const auto* p : group) {
        const auto d = distance_of(*p, m);
        if (!d) continue;
        ++s.n;
        sum += *d;
        if (threshold) accepted += accept(*threshold, *d) ? 1 : 0;
      }
      if (s.n > 0) {
        s.mean_distance = sum / static_cast<double>(s.n);
        if (threshold) s.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(s.n);
      }
      row.models[m] = s;
    }
    return row;
  };

  std::vector<SummaryRow> rows;
  std::vector<const PairAggregate*> all;
  for (const auto& p : pairs) all.push_back(&p);
  for (const auto type : kSampleTypes) {
    std::vector<const PairAggregate*> group;
    std::map<double, std::vector<const PairAggregate*>> by_level;
    std::map<double, std::string> level_names;
    for (const auto* p : all) {
      if (p->type != type) continue;
      group.push_back(p);
      if (!p->sublevel.empty()) {
        by_level[sublevel_value(p->sublevel)].push_back(p);
        level_names[sublevel_value(p->sublevel)] = p->sublevel;
      }
    }
    if (group.empty()) continue;
    rows.push_back(make_row(to_string(type), "", group));
    for (const auto& [level, members] : by_level) rows.push_back(make_row(to_string(type), level_names[level], members));
  }
  rows.push_back(make_row("all", "", all));
  return rows;
}

std::vector<CorrelationCell> correlation_table(const std::vector<PairAggregate>& pairs,
                                               const std::vector<Rating>& ratings, const AnalysisConfig& config) {
  std::vector<std::string> columns{"similarity"};
  for (const auto& m : models_of(pairs)) columns.push_back(m);
  columns.emplace_back(kLatentMetric);

  std::map<std::string, const PairAggregate*> by_id;
  for (const auto& p : pairs) by_id[p.pair_id] = &p;
  std::vector<const Rating*> sorted_ratings;
  for (const auto& r : ratings) sorted_ratings.push_back(&r);
  std::sort(sorted_ratings.begin(), sorted_ratings.end(), [](const Rating* a, const Rating* b) {
    return std::tie(a->pair_id, a->participant_id) < std::tie(b->pair_id, b->participant_id);
  });

  std::vector<std::string> rows;
  for (const auto type : kSampleTypes) {
    if (type != SampleType::genuine) rows.push_back(to_string(type));
  }
  rows.emplace_back("all");

  std::vector<CorrelationCell> cells;
  for (const auto& row : rows) {
    auto in_row = [&](const PairAggregate& p) {
      return p.type != SampleType::genuine && (row == "all" || to_string(p.type) == row);
    };
    for (const auto& column : columns) {
      std::vector<double> x, y;
      if (config.per_rating) {
        for (const auto* r : sorted_ratings) {
          const auto it = by_id.find(r->pair_id);
          if (it == by_id.end() || !in_row(*it->second)) continue;
          const auto value =
              column == "similarity" ? std::optional<double>(r->similarity) : distance_of(*it->second, column);
          if (!value) continue;
          x.push_back(r->same_person ? 1.0 : 0.0);
          y.push_back(*value);
        }
      } else {
        for (const auto& p : pairs) {
          if (!in_row(p)) continue;
          const auto value = column == "similarity" ? std::optional<double>(p.mean_similarity) : distance_of(p, column);
          if (!value) continue;
          x.push_back(p.identity_fraction);
          y.push_back(*value);
        }
      }
      CorrelationCell cell{row, column, {x.size(), std::nullopt, std::nullopt}, ""};
      if (x.size() >= 3) cell.result = pearson(x, y);
      cell.stars = significance_stars(cell.result.p);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

DisagreementRanking disagreement(const std::vector<PairAggregate>& pairs, const std::string& model,
                                 std::size_t top_k) {
  DisagreementRanking ranking;
  ranking.model = model;
  std::vector<std::pair<const PairAggregate*, double>> scored;
  for (const auto& p : pairs) {
    if (const auto d = distance_of(p, model)) scored.emplace_back(&p, *d);
  }
  if (scored.empty()) throw ValidationError("disagreement: no pair has a '" + model + "' distance");
  const auto [lo, hi] = std::minmax_element(scored.begin(), scored.end(),
                                            [](const auto& a, const auto& b) { return a.second < b.second; });
  ranking.d_min = lo->second;
  ranking.d_max = hi->second;
  ranking.n = scored.size();
  if (!(ranking.d_max > ranking.d_min)) {
    throw ValidationError("disagreement: every '" + model + "' distance equals " + format_number(ranking.d_min) +
                          "; cannot normalize");
  }
  std::vector<DisagreementEntry> entries;
  for (const auto& [p, d] : scored) {
    const double similarity = 1.0 - (d - ranking.d_min) / (ranking.d_max - ranking.d_min);
    const double score = std::clamp(p->identity_fraction - similarity, -1.0, 1.0);
    entries.push_back({p->pair_id, p->type, score, p->identity_fraction, d,
                       score < 0.0 ? DisagreementDirection::model_more_similar
                                   : DisagreementDirection::humans_more_similar});
  }
  auto ascending = entries;
  std::sort(ascending.begin(), ascending.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score < b.score : a.pair_id < b.pair_id;
  });
  auto descending = entries;
  std::sort(descending.begin(), descending.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.pair_id < b.pair_id;
  });
  for (const auto& e : ascending) {
    if (ranking.model_more_similar.size() >= top_k || e.direction != DisagreementDirection::model_more_similar) break;
    ranking.model_more_similar.push_back(e);
  }
  for (const auto& e : descending) {
    if (ranking.humans_more_similar.size() >= top_k || e.direction != DisagreementDirection::humans_more_similar) {
      break;
    }
    ranking.humans_more_similar.push_back(e);
  }
  return ranking;
}

RaterDisagreement rater_disagreement(const std::vector<PairAggregate>& pairs, std::size_t top_k) {
  RaterDisagreement out;
  std::vector<RaterSpread> spreads;
  for (const auto& p : pairs) {
    if (!p.similarity_sd) {
      out.excluded.push_back(p.pair_id);
      continue;
    }
    spreads.push_back({p.pair_id, p.n, *p.similarity_sd, *p.identity_sd});
  }
  auto rank = [&](auto key) {
    auto sorted = spreads;
    std::sort(sorted.begin(), sorted.end(), [&](const RaterSpread& a, const RaterSpread& b) {
      return key(a) != key(b) ? key(a) > key(b) : a.pair_id < b.pair_id;
    });
    if (sorted.size() > top_k) sorted.resize(top_k);
    return sorted;
  };
  out.by_similarity = rank([](const RaterSpread& s) { return s.similarity_sd; });
  out.by_identity = rank([](const RaterSpread& s) { return s.identity_sd; });
  return out;
}

int histogram_bin(int similarity) {
  if (similarity < 0 || similarity > 100) throw ValidationError("similarity outside [0, 100]");
  return std::min(similarity / kHistogramBinWidth, kHistogramBins - 1);
}

std::map<std::string, std::vector<std::size_t>> similarity_histograms(const PairIndex& pairs,
                                                                      const std::vector<Rating>& ratings) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (const auto type : kSampleTypes) out[to_string(type)].assign(kHistogramBins, 0);
  out["all"].assign(kHistogramBins, 0);
  for (const auto& r : ratings) {
    const auto it = pairs.find(r.pair_id);
    if (it == pairs.end()) throw ValidationError("rating of unknown pair '" + r.pair_id + "'");
    const auto bin = static_cast<std::size_t>(histogram_bin(r.similarity));
    ++out[to_string(it->second.type)][bin];
    ++out["all"][bin];
  }
  return out;
}

std::string histograms_csv(const std::map<std::string, std::vector<std::size_t>>& histograms) {
  std::string csv = "type,bin_lower,bin_upper,count\n";
  for (const auto& [type, counts] : histograms) {
    for (int b = 0; b < kHistogramBins; ++b) {
      csv += type + "," + std::to_string(b * kHistogramBinWidth) + "," + std::to_string((b + 1) * kHistogramBinWidth) +
             "," + std::to_string(counts[static_cast<std::size_t>(b)]) + "\n";
    }
  }
  return csv;
}

namespace {

struct ViolinPoint {
  std::string type;
  int vote;
  std::string model;
  std::string pair_id;
  double distance;
};

std::vector<ViolinPoint> violin_points(const std::vector<PairAggregate>& pairs, const PairIndex& index,
                                       const std::vector<Rating>& ratings) {
  std::map<std::string, const PairAggregate*> by_id;
  for (const auto& p : pairs) by_id[p.pair_id] = &p;
  std::vector<ViolinPoint> points;
  for (const auto& r : ratings) {
    const auto it = by_id.find(r.pair_id);
    if (it == by_id.end()) continue;
    const auto& p = *it->second;
    const auto type = to_string(index.at(r.pair_id).type);
    std::vector<std::string> models;
    for (const auto& [m, d] : p.distances) models.push_back(m);
    models.emplace_back(kLatentMetric);
    for (const auto& m : models) {
      if (const auto d = distance_of(p, m)) points.push_back({type, r.same_person ? 1 : 0, m, r.pair_id, *d});
    }
  }
  std::sort(points.begin(), points.end(), [](const ViolinPoint& a, const ViolinPoint& b) {
    return std::tie(a.type, a.vote, a.model, a.pair_id, a.distance) <
           std::tie(b.type, b.vote, b.model, b.pair_id, b.distance);
  });
  return points;
}

}  // namespace

std::string violin_csv(const std::vector<PairAggregate>& pairs, const PairIndex& index,
                       const std::vector<Rating>& ratings) {
  std::string csv = "type,same_person,model,pair_id,distance\n";
  for (const auto& p : violin_points(pairs, index, ratings)) {
    csv += p.type + "," + std::to_string(p.vote) + "," + p.model + "," + p.pair_id + "," + format_number(p.distance) +
           "\n";
  }
  return csv;
}

std::string violin_summary_csv(const std::vector<PairAggregate>& pairs, const PairIndex& index,
                               const std::vector<Rating>& ratings) {
  std::map<std::tuple<std::string, int, std::string>, std::vector<double>> groups;
  for (const auto& p : violin_points(pairs, index, ratings)) groups[{p.type, p.vote, p.model}].push_back(p.distance);
  std::string csv = "type,same_person,model,n,mean,min,q1,median,q3,max\n";
  for (auto& [key, values] : groups) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    const auto& [type, vote, model] = key;
    csv += type + "," + std::to_string(vote) + "," + model + "," + std::to_string(values.size()) + "," +
           format_number(sum / static_cast<double>(values.size())) + "," + format_number(values.front()) + "," +
           format_number(quantile(values, 0.25)) + "," + format_number(quantile(values, 0.5)) + "," +
           format_number(quantile(values, 0.75)) + "," + format_number(values.back()) + "\n";
  }
  return csv;
}

std::string pairs_csv(const std::vector<PairAggregate>& pairs) {
  const auto models = models_of(pairs);
  std::string csv = "pair_id,batch_id,type,sublevel,n,mean_similarity,identity_fraction,similarity_sd,identity_sd,latent";
  for (const auto& m : models) csv += "," + m;
  csv += "\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("NA"); };
  for (const auto& p : pairs) {
    csv += p.pair_id + "," + p.batch_id + "," + to_string(p.type) + "," + p.sublevel + "," + std::to_string(p.n) + "," +
           format_number(p.mean_similarity) + "," + format_number(p.identity_fraction) + "," + opt(p.similarity_sd) +
           "," + opt(p.identity_sd) + "," + format_number(p.latent_distance);
    for (const auto& m : models) csv += "," + opt(distance_of(p, m));
    csv += "\n";
  }
  return csv;
}

std::string to_string(DisagreementDirection direction) {
  return direction == DisagreementDirection::model_more_similar ? "model-more-similar" : "humans-more-similar";
}

json to_json(const SummaryRow& row) {
  json models = json::object();
  for (const auto& [name, s] : row.models) {
    models[name] = {{"n", s.n},
                    {"mean_distance", optional_number(s.mean_distance)},
                    {"acceptance_rate", optional_number(s.acceptance_rate)}};
  }
  return {{"type", row.type},
          {"sublevel", row.sublevel},
          {"n_pairs", row.n_pairs},
          {"n_ratings", row.n_ratings},
          {"mean_similarity", row.mean_similarity},
          {"mean_identity", row.mean_identity},
          {"mean_latent_distance", row.mean_latent_distance},
          {"models", models}};
}

json to_json(const CorrelationCell& cell) {
  return {{"row", cell.row},
          {"column", cell.column},
          {"n", cell.result.n},
          {"r", optional_number(cell.result.r)},
          {"p", optional_number(cell.result.p)},
          {"stars", cell.stars}};
}

json to_json(const DisagreementRanking& ranking) {
  auto entries = [](const std::vector<DisagreementEntry>& list) {
    json out = json::array();
    for (const auto& e : list) {
      out.push_back({{"pair_id", e.pair_id},
                     {"type", to_string(e.type)},
                     {"score", e.score},
                     {"identity_fraction", e.identity_fraction},
                     {"distance", e.distance},
                     {"direction", to_string(e.direction)}});
    }
    return out;
  };
  return {{"model", ranking.model},
          {"d_min", ranking.d_min},
          {"d_max", ranking.d_max},
          {"n", ranking.n},
          {"model_more_similar", entries(ranking.model_more_similar)},
          {"humans_more_similar", entries(ranking.humans_more_similar)}};
}

json to_json(const RaterDisagreement& spread) {
  auto list = [](const std::vector<RaterSpread>& v) {
    json out = json::array();
    for (const auto& s : v) {
      out.push_back(
          {{"pair_id", s.pair_id}, {"n", s.n}, {"similarity_sd", s.similarity_sd}, {"identity_sd", s.identity_sd}});
    }
    return out;
  };
  return {{"by_similarity", list(spread.by_similarity)},
          {"by_identity", list(spread.by_identity)},
          {"excluded", spread.excluded}};
}

}  // namespace latentprobe
