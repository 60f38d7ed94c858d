#include "dsbf/gradcheck_suite.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "dsbf/error.hpp"

namespace dsbf {
namespace {

bool clear_of_kinks(const StackCache& cache, const LayerStack& stack, double margin) {
  for (std::size_t l = 0; l < stack.size(); ++l) {
    if (stack[l].activation != Activation::relu) continue;
    for (double v : cache.layers[l].pre.values()) {
      if (std::abs(v) < margin) return false;
    }
  }
  return true;
}

bool batch_clear(const ModelBundle& model, const Matrix& x, double margin) {
  ForwardCache cache;
  forward_features(model, x, &cache);
  return clear_of_kinks(cache.g, model.g, margin) && clear_of_kinks(cache.b, model.b, margin);
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

void randomize_biases(ModelBundle& model, Rng& rng) {
  for_each_block(model, [&](const ParamBlock& blk) {
    if (blk.name.ends_with(".bias")) {
      for (double& v : blk.values) v = rng.uniform(-0.5, 0.5);
    }
  });
}

}  // namespace

GradFixture make_grad_fixture(std::uint64_t seed, const GradFixtureOptions& opts) {
  opts.dims.validate();
  const Rng root(seed);
  for (std::size_t attempt = 0; attempt < opts.max_attempts; ++attempt) {
    Rng rng = root.derive(attempt);
    GradFixture f;
    f.model = ModelBundle::create(opts.dims, rng);
    randomize_biases(f.model, rng);
    f.model.alpha = rng.uniform(-1.0, 1.0);
    const std::size_t classes = opts.dims.classes;
    f.batch.labeled.x = random_matrix(opts.rows, opts.dims.input_dim, rng);
    for (std::size_t i = 0; i < opts.rows; ++i) f.batch.labeled.labels.push_back(rng.below(classes));
    bool ok = batch_clear(f.model, f.batch.labeled.x, opts.kink_margin);
    for (std::size_t s = 0; ok && s < opts.dims.unlabeled_domains; ++s) {
      UnlabeledBatch ub;
      ub.x = random_matrix(opts.rows, opts.dims.input_dim, rng);
      // about half the rows match the labeled row's class
      for (std::size_t i = 0; i < opts.rows; ++i) {
        ub.pseudo.push_back(rng.uniform() < 0.5 ? f.batch.labeled.labels[i] : rng.below(classes));
      }
      ok = batch_clear(f.model, ub.x, opts.kink_margin);
      f.batch.unlabeled.push_back(std::move(ub));
    }
    if (ok) return f;
  }
  throw NumericalError("make_grad_fixture: no kink-free fixture found");
}

std::vector<LossCheckLine> run_grad_suite(const GradSuiteOptions& opts) {
  struct Case {
    std::string name;
    std::function<Gradients(const GradFixture&)> analytic;
    std::function<std::vector<GradTerm>(const GradFixture&)> terms;
  };
  const Stage2Weights weights{0.7, 1.3, true};
  const std::vector<Case> cases = {
      {"cl",
       [](const GradFixture& f) {
         return loss_cl(f.model, f.batch.labeled.x, one_hot(f.batch.labeled.labels, f.model.dims.classes)).grads;
       },
       [](const GradFixture& f) {
         return std::vector<GradTerm>{{"cl", 1.0, kRouteCl, [&f](const ModelBundle& m) {
                                         return loss_cl_value(m, f.batch.labeled.x,
                                                              one_hot(f.batch.labeled.labels, m.dims.classes));
                                       }}};
       }},
      {"im",
       [](const GradFixture& f) {
         std::vector<Matrix> xs;
         for (const auto& u : f.batch.unlabeled) xs.push_back(u.x);
         return loss_im(f.model, xs, true).grads;
       },
       [](const GradFixture& f) {
         return std::vector<GradTerm>{{"im", 1.0, kRouteCl, [&f](const ModelBundle& m) {
                                         std::vector<Matrix> xs;
                                         for (const auto& u : f.batch.unlabeled) xs.push_back(u.x);
                                         return loss_im_value(m, xs);
                                       }}};
       }},
      {"cu", [](const GradFixture& f) { return loss_cu(f.model, f.batch.unlabeled, true).grads; },
       [](const GradFixture& f) {
         return std::vector<GradTerm>{
             {"cu", 1.0, kRouteCl, [&f](const ModelBundle& m) { return loss_cu_value(m, f.batch.unlabeled); }}};
       }},
      {"fp", [](const GradFixture& f) { return loss_fp(f.model, f.batch.labeled, f.batch.unlabeled).grads; },
       [](const GradFixture& f) {
         return std::vector<GradTerm>{{"fp", 1.0, kRouteFp, [&f](const ModelBundle& m) {
                                         return loss_fp_value(m, f.batch.labeled, f.batch.unlabeled);
                                       }}};
       }},
      {"bf", [](const GradFixture& f) { return loss_bf(f.model, f.batch.labeled.labels, f.batch.unlabeled).grads; },
       [](const GradFixture& f) {
         return std::vector<GradTerm>{{"bf", 1.0, kRouteBf, [&f](const ModelBundle& m) {
                                         return loss_bf_value(m, f.batch.labeled.labels, f.batch.unlabeled);
                                       }}};
       }},
      {"s2", [weights](const GradFixture& f) { return stage2_objective(f.model, f.batch, weights).grads; },
       [weights](const GradFixture& f) { return stage2_terms(f.batch, weights); }},
  };

  std::vector<LossCheckLine> lines;
  for (const auto& c : cases) {
    LossCheckLine line;
    line.loss = c.name;
    for (std::size_t s = 0; s < opts.seeds; ++s) {
      const std::uint64_t seed = opts.seed * 1000003ULL + s;
      const GradFixture f = make_grad_fixture(seed);
      Gradients g = c.analytic(f);
      if (opts.corrupt) opts.corrupt(c.name, g);
      const std::vector<GradTerm> terms = c.terms(f);
      GradCheckOptions gopts;
      gopts.h = opts.h;
      gopts.seed = seed;
      const GradCheckReport r = finite_diff_check(terms, g, f.model, gopts);
      line.coords += r.coords_checked;
      ++line.seeds;
      if (!std::isfinite(r.max_rel_error) || r.max_rel_error > line.max_rel_error || line.seeds == 1) {
        line.max_rel_error = std::isfinite(r.max_rel_error) ? r.max_rel_error : INFINITY;
        line.worst_block = r.worst_block;
      }
    }
    line.pass = line.max_rel_error <= opts.tolerance;
    lines.push_back(std::move(line));
  }
  return lines;
}

std::string format_grad_report(const std::vector<LossCheckLine>& lines) {
  std::ostringstream out;
  char buf[160];
  for (const auto& l : lines) {
    std::snprintf(buf, sizeof(buf), "%-4s max_rel_error=%.6g worst=%s seeds=%zu coords=%zu %s\n", l.loss.c_str(),
                  l.max_rel_error, l.worst_block.c_str(), l.seeds, l.coords, l.pass ? "PASS" : "FAIL");
    out << buf;
  }
  return out.str();
}

}  // namespace dsbf
