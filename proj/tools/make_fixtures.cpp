// Regenerates the planted fixtures under data/. Every vector is constructed,
// not sampled from a model, so each test can state its expected value exactly.
//
//   make_fixtures <data-dir>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fairdiff/fairdiff.hpp"

namespace fs = std::filesystem;
using namespace fairdiff;

namespace {

using Vec = std::vector<double>;

Vec unit_axis(std::size_t dim, std::size_t i) {
  Vec v(dim, 0.0);
  v[i] = 1.0;
  return v;
}

double dotv(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Vec axpy(double a, const Vec& x, double b, const Vec& y) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

void normalize(Vec& v) {
  const double n = std::sqrt(dotv(v, v));
  for (auto& x : v) x /= n;
}

// Random unit vector orthogonal to every vector in `basis` (assumed orthonormal).
Vec random_orthogonal(NormalStream& rng, std::size_t dim, const std::vector<Vec>& basis) {
  Vec v(dim);
  for (auto& x : v) x = rng.normal();
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) v = axpy(1.0, v, -dotv(v, b), b);
  }
  normalize(v);
  return v;
}

// a^2 + b^2 + c^2 + d^2 = n with a >= b >= c >= d >= 0; `skip` picks among
// the decompositions so different images get different vectors.
std::array<int, 4> four_squares(int n, int skip) {
  std::vector<std::array<int, 4>> found;
  for (int a = 0; a * a <= n; ++a) {
    for (int b = 0; b <= a && a * a + b * b <= n; ++b) {
      for (int c = 0; c <= b && a * a + b * b + c * c <= n; ++c) {
        const int rest = n - a * a - b * b - c * c;
        const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(rest))));
        if (d <= c && d * d == rest) found.push_back({a, b, c, d});
      }
    }
  }
  return found[static_cast<std::size_t>(skip) % found.size()];
}

void write_store_file(const fs::path& path, const EmbeddingStore& store, const std::string& comment) {
  save_store(store, path.string(), comment);
  std::cout << "wrote " << path.string() << " (" << store.size() << " vectors)\n";
}

void write_json_file(const fs::path& path, const Json& j) {
  write_json(path.string(), j);
  std::cout << "wrote " << path.string() << "\n";
}

Json subset_json(const std::string& attribute, const std::vector<std::pair<std::string, double>>& images) {
  Json s{{"attribute", attribute}, {"images", Json::array()}};
  for (const auto& [key, score] : images) s["images"].push_back({{"id", key}, {"key", key}, {"true_score", score}});
  return s;
}

// Multiaccurate but not multicalibrated auditor. Prompt "doctor" = e1.
// "male" images: cos = (j - 64)/64, so (cos + 1)/2 = j/128 = s*.
// "female" images: orthogonal to e1, so the auditor says 0.5 while s* runs
// over j/128. All coordinates are multiples of 1/64 with exact unit norm.
void counterexample(const fs::path& dir) {
  fs::create_directories(dir);
  EmbeddingStore prompts(StoreKind::kPrompt, 5, true);
  prompts.insert("doctor", EmbeddingVector(unit_axis(5, 0)));
  auto exact = [](int lead, int skip) {
    const auto sq = four_squares(64 * 64 - lead * lead, skip);
    return Vec{lead / 64.0, sq[0] / 64.0, sq[1] / 64.0, sq[2] / 64.0, sq[3] / 64.0};
  };
  prompts.insert("male doctor", EmbeddingVector(exact(60, 0)));
  prompts.insert("female doctor", EmbeddingVector(exact(58, 1)));

  EmbeddingStore images(StoreKind::kImage, 5, true);
  std::vector<std::pair<std::string, double>> male, female;
  for (int j = 0; j <= 128; ++j) {
    const std::string mk = "male_" + std::to_string(j);
    const std::string fk = "female_" + std::to_string(j);
    images.insert(mk, EmbeddingVector(exact(j - 64, j)));
    images.insert(fk, EmbeddingVector(exact(0, j)));
    male.push_back({mk, j / 128.0});
    female.push_back({fk, j / 128.0});
  }
  write_store_file(dir / "prompts.store", prompts, "planted: exact dyadic unit vectors");
  write_store_file(dir / "images.store", images, "planted: exact dyadic unit vectors");
  Json audit{{"base", "doctor"},
             {"prompt_store", "prompts.store"},
             {"image_store", "images.store"},
             {"alpha", 0.0},
             {"subsets", {subset_json("male", male), subset_json("female", female)}}};
  write_json_file(dir / "audit.json", audit);
}

// Two attribute clusters around their own composed prompts. Each image has
// cosine 0.9 with its composed prompt, so the subclass score is flat; the
// composed prompts sit at different angles from "doctor", so score-then-average
// moves by exactly 0.45 * (cos_m - cos_f) = 0.02 across the sweep.
void planted_clusters(const fs::path& dir) {
  fs::create_directories(dir);
  const std::size_t dim = 16;
  const double cos_beta = 0.9;
  const double cos_m = 0.82;
  const double cos_f = 0.82 - 0.02 / (0.5 * cos_beta);
  const Vec e1 = unit_axis(dim, 0), e2 = unit_axis(dim, 1), e3 = unit_axis(dim, 2);
  const Vec pm = axpy(cos_m, e1, std::sqrt(1 - cos_m * cos_m), e2);
  const Vec pf = axpy(cos_f, e1, std::sqrt(1 - cos_f * cos_f), e3);
  EmbeddingStore prompts(StoreKind::kPrompt, dim, true);
  prompts.insert("doctor", EmbeddingVector(e1));
  prompts.insert("male doctor", EmbeddingVector(pm));
  prompts.insert("female doctor", EmbeddingVector(pf));

  EmbeddingStore images(StoreKind::kImage, dim, true);
  NormalStream rng(20240605, 5);
  std::vector<std::pair<std::string, double>> male, female;
  for (int i = 0; i < 20; ++i) {
    for (int g = 0; g < 2; ++g) {
      const Vec n = random_orthogonal(rng, dim, {e1, e2, e3});
      Vec v = axpy(cos_beta, g == 0 ? pm : pf, std::sqrt(1 - cos_beta * cos_beta), n);
      normalize(v);
      const std::string key = (g == 0 ? "male_" : "female_") + std::to_string(i);
      images.insert(key, EmbeddingVector(v));
      (g == 0 ? male : female).push_back({key, 0.95});
    }
  }
  write_store_file(dir / "prompts.store", prompts, "planted clusters");
  write_store_file(dir / "images.store", images, "planted clusters");
  Json audit{{"base", "doctor"},
             {"prompt_store", "prompts.store"},
             {"image_store", "images.store"},
             {"alpha", 0.05},
             {"subsets", {subset_json("male", male), subset_json("female", female)}}};
  write_json_file(dir / "audit.json", audit);
}

// Mean prompt-image cosines 0.800 (male) and 0.780 (female), equal true scores.
void text_image_gap(const fs::path& dir) {
  fs::create_directories(dir);
  const std::size_t dim = 8;
  const Vec e1 = unit_axis(dim, 0);
  EmbeddingStore prompts(StoreKind::kPrompt, dim, true);
  prompts.insert("doctor", EmbeddingVector(e1));
  EmbeddingStore images(StoreKind::kImage, dim, true);
  NormalStream rng(20240605, 6);
  std::vector<std::pair<std::string, double>> male, female;
  for (int i = 0; i < 10; ++i) {
    for (int g = 0; g < 2; ++g) {
      const double c = g == 0 ? 0.8 : 0.78;
      const Vec n = random_orthogonal(rng, dim, {e1});
      const Vec v = axpy(c, e1, std::sqrt(1 - c * c), n);
      const std::string key = (g == 0 ? "male_" : "female_") + std::to_string(i);
      images.insert(key, EmbeddingVector(v));
      (g == 0 ? male : female).push_back({key, 0.9});
    }
  }
  write_store_file(dir / "prompts.store", prompts, "planted mean cosines 0.800 / 0.780");
  write_store_file(dir / "images.store", images, "planted mean cosines 0.800 / 0.780");
  Json audit{{"base", "doctor"},
             {"prompt_store", "prompts.store"},
             {"image_store", "images.store"},
             {"alpha", 0.05},
             {"subsets", {subset_json("male", male), subset_json("female", female)}}};
  write_json_file(dir / "audit.json", audit);
}

// Auditor with max multiaccuracy deviation 0.05: s* = 0.45 everywhere, the
// auditor reads 0.5 (cos 0) on the first subset and 0.42 (cos -0.16) on the second.
void stability(const fs::path& dir) {
  fs::create_directories(dir);
  const std::size_t dim = 6;
  const Vec e1 = unit_axis(dim, 0);
  EmbeddingStore prompts(StoreKind::kPrompt, dim, true);
  prompts.insert("doctor", EmbeddingVector(e1));
  EmbeddingStore images(StoreKind::kImage, dim, true);
  NormalStream rng(20240605, 7);
  std::vector<std::pair<std::string, double>> a, b;
  for (int i = 0; i < 8; ++i) {
    for (int g = 0; g < 2; ++g) {
      const double c = g == 0 ? 0.0 : -0.16;
      const Vec n = random_orthogonal(rng, dim, {e1});
      const Vec v = axpy(c, e1, std::sqrt(1 - c * c), n);
      const std::string key = (g == 0 ? "male_" : "female_") + std::to_string(i);
      images.insert(key, EmbeddingVector(v));
      (g == 0 ? a : b).push_back({key, 0.45});
    }
  }
  write_store_file(dir / "prompts.store", prompts, "planted auditor deviations 0.05 / 0.03");
  write_store_file(dir / "images.store", images, "planted auditor deviations 0.05 / 0.03");
  Json audit{{"base", "doctor"},
             {"prompt_store", "prompts.store"},
             {"image_store", "images.store"},
             {"alpha", 0.05},
             {"subsets", {subset_json("male", a), subset_json("female", b)}}};
  write_json_file(dir / "audit.json", audit);
}

// Twelve occupations whose male / female / average cosines reproduce the
// printed text-text table to three decimals. For base b, composed prompts are
// m = c_m b + s_m u and f = c_f b + s_f w with u.w = rho chosen so that
// cos(b, (m + f)/2) equals the printed average.
void occupations(const fs::path& dir) {
  fs::create_directories(dir);
  struct Row {
    const char* name;
    double male, female, average;
  };
  const Row rows[] = {{"firefighter", 0.971, 0.919, 0.959}, {"chemist", 0.962, 0.923, 0.955},
                      {"chef", 0.954, 0.918, 0.950},        {"architect", 0.957, 0.924, 0.955},
                      {"biologist", 0.978, 0.949, 0.972},   {"professor", 0.968, 0.950, 0.966},
                      {"doctor", 0.962, 0.947, 0.965},      {"teacher", 0.962, 0.947, 0.963},
                      {"librarian", 0.962, 0.951, 0.969},   {"hairdresser", 0.951, 0.958, 0.967},
                      {"receptionist", 0.954, 0.962, 0.970}, {"nurse", 0.951, 0.973, 0.974}};
  const std::size_t dim = 32;
  NormalStream rng(20240605, 8);
  EmbeddingStore store(StoreKind::kPrompt, dim, true);
  std::ofstream fig1(dir / "professions.csv");
  fig1 << "profession,ratio,proportion_male\n";
  for (const auto& r : rows) {
    const Vec b = random_orthogonal(rng, dim, {});
    const Vec u = random_orthogonal(rng, dim, {b});
    const Vec w0 = random_orthogonal(rng, dim, {b, u});
    const double sm = std::sqrt(1 - r.male * r.male);
    const double sf = std::sqrt(1 - r.female * r.female);
    const double s = (r.male + r.female) / r.average;
    const double rho = (0.5 * s * s - 1.0 - r.male * r.female) / (sm * sf);
    if (std::abs(rho) > 1.0) throw std::runtime_error(std::string("no planted solution for ") + r.name);
    const Vec w = axpy(rho, u, std::sqrt(1 - rho * rho), w0);
    store.insert(r.name, EmbeddingVector(b));
    Vec m = axpy(r.male, b, sm, u);
    Vec f = axpy(r.female, b, sf, w);
    normalize(m);
    normalize(f);
    store.insert(std::string("male ") + r.name, EmbeddingVector(m));
    store.insert(std::string("female ") + r.name, EmbeddingVector(f));
    // Synthetic classifier proportions: a noisy increasing function of the ratio.
    const double ratio = r.male / r.female;
    const double prop = std::clamp(0.5 + 4.0 * (ratio - 1.0) + 0.03 * rng.normal(), 0.0, 1.0);
    fig1 << r.name << ",," << fixed(prop, 3) << "\n";
  }
  write_store_file(dir / "prompts.store", store, "planted to reproduce a printed text-text bias table");
  std::cout << "wrote " << (dir / "professions.csv").string() << "\n";
}

// word2vec text format: nurse, person, philosopher orthonormal; man and woman
// carry the printed cosines to each, with the remaining mass spread over the
// other 297 axes. Norms are deliberately not 1.
void word_vectors(const fs::path& dir) {
  fs::create_directories(dir);
  const std::size_t dim = 300;
  NormalStream rng(20240605, 9);
  const Vec nurse = random_orthogonal(rng, dim, {});
  const Vec person = random_orthogonal(rng, dim, {nurse});
  const Vec philosopher = random_orthogonal(rng, dim, {nurse, person});
  auto build = [&](double cn, double cp, double cph, double scale) {
    const Vec rest = random_orthogonal(rng, dim, {nurse, person, philosopher});
    const double r = std::sqrt(1 - cn * cn - cp * cp - cph * cph);
    Vec v(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      v[i] = scale * (cn * nurse[i] + cp * person[i] + cph * philosopher[i] + r * rest[i]);
    }
    return v;
  };
  const Vec man = build(0.255, 0.534, 0.290, 1.7);
  const Vec woman = build(0.441, 0.547, 0.176, 0.6);
  std::ofstream out(dir / "w2v_sample.txt");
  out << "5 " << dim << "\n";
  auto row = [&](const char* token, const Vec& v, double scale) {
    out << token;
    for (double x : v) out << ' ' << detail::format_double(scale * x);
    out << "\n";
  };
  row("man", man, 1.0);
  row("woman", woman, 1.0);
  row("nurse", nurse, 2.0);
  row("person", person, 1.0);
  row("philosopher", philosopher, 0.5);
  std::cout << "wrote " << (dir / "w2v_sample.txt").string() << "\n";
}

Json model_json(const std::vector<ComponentShape>& shapes, const std::vector<Vec>& a, const Vec& c) {
  return model_to_json(ConditionalMixtureModel(shapes, a, c));
}

// Separated two-component model; "doctor" sits just inside the closeness
// radius epsilon / (sqrt(T) L) of "male doctor".
void theorem_models(const fs::path& dir) {
  fs::create_directories(dir);
  const Config defaults;
  const double epsilon = 0.05;
  const ConditionalMixtureModel model({{"male", {-4.0}, {0.25}}, {"female", {4.0}, {0.25}}}, {{6.0, 0.0}, {0.0, 6.0}},
                                      {0.0, 0.0});
  const double radius = epsilon / (std::sqrt(defaults.sde.horizon) * model.drift_lipschitz_bound());
  const Vec male{1.0, 0.0}, female{0.0, 1.0};
  EmbeddingStore prompts(StoreKind::kPrompt, 2, false);
  prompts.insert("doctor", EmbeddingVector(tune_base_embedding(male, female, 0.999 * radius)));
  prompts.insert("male doctor", EmbeddingVector(male));
  prompts.insert("female doctor", EmbeddingVector(female));
  prompts.insert("person", EmbeddingVector(Vec{0.5, 0.5}));
  prompts.insert("male person", EmbeddingVector(Vec{0.5, 0.5}));
  prompts.insert("female person", EmbeddingVector(Vec{0.5, 0.5}));
  write_store_file(dir / "prompts.store", prompts, "doctor tuned to 0.999 of the closeness radius for epsilon = 0.05");

  Json sep = model_to_json(model);
  sep["prompt_store"] = "prompts.store";
  sep["base"] = "doctor";
  sep["attributes"] = {"male", "female"};
  sep["v"] = {0.5, 0.5};
  write_json_file(dir / "separated_model.json", sep);

  // 0.995 * (2 Phi(0.6785) - 1) ~= 0.5: pairwise TV far below 1 - epsilon.
  Json overlap = model_json({{"male", {-0.6785}, {1.0}}, {"female", {0.6785}, {1.0}}}, {{6.0, 0.0}, {0.0, 6.0}},
                            {0.0, 0.0});
  overlap["prompt_store"] = "prompts.store";
  overlap["base"] = "doctor";
  overlap["attributes"] = {"male", "female"};
  overlap["v"] = {0.5, 0.5};
  write_json_file(dir / "overlapping_model.json", overlap);

  Json planar = model_json({{"a", {-2.0, 0.0}, {0.5, 0.5}}, {"b", {2.0, 0.0}, {0.5, 0.5}}, {"c", {0.0, 2.5}, {0.5, 0.5}}},
                           {{2.0, 0.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 2.0}}, {0.0, 0.0, 0.0});
  write_json_file(dir / "planar_model.json", planar);
}

void report_fixtures(const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "generation_proportions.csv");
  out << "generation,proportion\nNurse,0.596\nPerson,0.504\nPhilosopher,0.446\n";
  std::cout << "wrote " << (dir / "generation_proportions.csv").string() << "\n";
  write_json_file(dir / "default_config.json", to_json(Config{}));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <data-dir>\n";
    return 2;
  }
  const fs::path root(argv[1]);
  try {
    counterexample(root / "counterexample");
    planted_clusters(root / "clusters");
    text_image_gap(root / "text_image_gap");
    stability(root / "stability");
    occupations(root / "occupations");
    word_vectors(root / "word_vectors");
    theorem_models(root / "models");
    report_fixtures(root / "report");
  } catch (const std::exception& e) {
    std::cerr << "make_fixtures: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
