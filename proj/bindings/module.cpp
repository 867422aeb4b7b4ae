#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fednmap/algorithms.hpp"
#include "fednmap/idx.hpp"
#include "fednmap/maps.hpp"
#include "fednmap/problem.hpp"
#include "fednmap/regularizer.hpp"
#include "fednmap/simulator.hpp"
#include "fednmap/verify.hpp"

namespace py = pybind11;
using namespace fednmap;

namespace {

// Metrics as plain dicts; optional fields become None.
py::dict record_to_dict(const MetricsRecord& r) {
  py::dict d;
  d["round"] = r.round;
  d["algo"] = r.algo;
  d["n"] = r.n;
  d["Q"] = r.Q;
  d["seed"] = r.seed;
  d["gamma"] = r.gamma;
  d["eta_a"] = r.eta_a;
  d["eta_s"] = r.eta_s;
  d["fnat_sq"] = r.fnat_sq;
  d["fnor_sq"] = r.fnor_sq;
  d["psi"] = r.psi;
  d["psi_gap"] = r.psi_gap ? py::cast(*r.psi_gap) : py::none();
  d["lyapunov"] = r.lyapunov;
  d["train_loss"] = r.train_loss;
  d["test_acc"] = r.test_acc ? py::cast(*r.test_acc) : py::none();
  d["uplink_bytes"] = r.uplink_bytes;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Composite federated learning simulator (normal-map updates, "
            "drift correction, Zhang and SCAFFOLD baselines)";

  py::class_<Regularizer>(m, "Regularizer")
      .def_static("zero", &Regularizer::zero)
      .def_static("l1", &Regularizer::l1, py::arg("nu"))
      .def_static("elastic_net", &Regularizer::elastic_net, py::arg("nu1"),
                  py::arg("nu2"))
      .def_static("box", &Regularizer::box, py::arg("lo"), py::arg("hi"))
      .def_readonly("nu1", &Regularizer::nu1)
      .def_readonly("nu2", &Regularizer::nu2)
      .def_readonly("rho", &Regularizer::rho)
      .def_property_readonly("kind", &Regularizer::kind_name);

  m.def("prox", &prox, py::arg("reg"), py::arg("gamma"), py::arg("v"));
  m.def(
      "phi_value",
      [](const Regularizer& reg, const Vec& x) -> py::object {
        auto v = phi_value(reg, x);
        return v ? py::cast(*v) : py::none();
      },
      py::arg("reg"), py::arg("x"),
      "phi(x); None encodes +infinity (box violated)");
  m.def("min_norm_subgradient", &min_norm_subgradient, py::arg("reg"),
        py::arg("x"), py::arg("grad_f"));

  py::class_<Problem, std::shared_ptr<Problem>>(m, "Problem")
      .def_property_readonly("n", &Problem::num_clients)
      .def_property_readonly("p", &Problem::dim)
      .def_property_readonly("l_bound", &Problem::l_bound)
      .def_property_readonly("kind", &Problem::kind_name)
      .def("loss", &Problem::loss, py::arg("client"), py::arg("x"))
      .def("full_gradient", &Problem::full_gradient, py::arg("client"),
           py::arg("x"))
      .def("average_loss", &Problem::average_loss, py::arg("x"))
      .def("average_gradient", &Problem::average_gradient, py::arg("x"))
      .def(
          "stochastic_gradient",
          [](const Problem& p, int client, const Vec& x, std::uint64_t seed,
             std::uint64_t round, std::uint64_t step) {
            RngStream rng(seed, static_cast<std::uint64_t>(client), round,
                          step);
            return p.stochastic_gradient(client, x, rng);
          },
          py::arg("client"), py::arg("x"), py::arg("seed"),
          py::arg("round") = 0, py::arg("step") = 0);

  m.def(
      "make_composite_quadratic",
      [](int n, int p, double hetero, std::uint64_t seed, double sigma) {
        auto q = make_composite_quadratic(n, p, hetero, seed);
        q->set_noise(NoiseModel::gaussian(sigma));
        return std::shared_ptr<Problem>(std::move(q));
      },
      py::arg("n"), py::arg("p"), py::arg("hetero"), py::arg("seed"),
      py::arg("sigma") = 0.0);

  m.def("normal_map",
        [](const Problem& prob, const Regularizer& reg, double gamma,
           const Vec& z) {
          NormalMapResult r = normal_map(prob, reg, gamma, z);
          return py::make_tuple(r.x, r.fnor);
        },
        py::arg("prob"), py::arg("reg"), py::arg("gamma"), py::arg("z"),
        "returns (x, F_nor(z))");
  m.def("natural_map", &natural_map, py::arg("prob"), py::arg("reg"),
        py::arg("gamma"), py::arg("x"));
  m.def("c0_constant", &c0_constant, py::arg("gamma"), py::arg("rho"),
        py::arg("l"));
  m.def(
      "reference_solve",
      [](const Problem& prob, const Regularizer& reg, double gamma,
         const Vec& z0, double tol, int max_iter) {
        SolveResult r = reference_solve(prob, reg, gamma, z0, tol, max_iter);
        return py::make_tuple(r.z, r.x, r.psi_star, r.converged);
      },
      py::arg("prob"), py::arg("reg"), py::arg("gamma"), py::arg("z0"),
      py::arg("tol") = 1e-10, py::arg("max_iter") = 200000,
      "returns (z_star, x_star, psi_star, converged)");

  m.def(
      "theorem1_params",
      [](double l, double rho, double sigma, int T, int n, int Q,
         double delta_psi) {
        Theorem1Params p = theorem1_params(l, rho, sigma, T, n, Q, delta_psi);
        py::dict d;
        d["gamma"] = p.gamma;
        d["eta_hat"] = p.eta_hat;
        d["eta_a"] = p.eta_a;
        d["eta_s"] = p.eta_s;
        d["m"] = p.m;
        d["sigma_zero_fallback"] = p.sigma_zero_fallback;
        d["premise_ok"] = p.premise_ok;
        return d;
      },
      py::arg("l"), py::arg("rho"), py::arg("sigma"), py::arg("T"),
      py::arg("n"), py::arg("Q"), py::arg("delta_psi"));
  m.def(
      "theorem2_params",
      [](double l, double rho, double mu, int n, int Q, int T, double eta_s) {
        Theorem2Params p = theorem2_params(l, rho, mu, n, Q, T, eta_s);
        py::dict d;
        d["gamma"] = p.gamma;
        d["eta_a"] = p.eta_a;
        d["eta_s"] = p.eta_s;
        d["eta_hat"] = p.eta_hat;
        d["m"] = p.m;
        d["degenerate"] = p.degenerate;
        return d;
      },
      py::arg("l"), py::arg("rho"), py::arg("mu"), py::arg("n"), py::arg("Q"),
      py::arg("T"), py::arg("eta_s") = 1.0);

  m.def(
      "run_quadratic",
      [](const std::string& algo, int n, int p, double hetero, double sigma,
         int Q, int T, double eta_a, double eta_s, double gamma,
         const Regularizer& reg, std::uint64_t seed, int workers) {
        RunSpec spec;
        spec.make_problem = [p, hetero, sigma](int nn, std::uint64_t sd) {
          auto q = make_composite_quadratic(nn, p, hetero, sd);
          q->set_noise(NoiseModel::gaussian(sigma));
          return std::shared_ptr<const Problem>(std::move(q));
        };
        spec.reg = reg;
        spec.algo = algo_from_name(algo);
        spec.fed.n = n;
        spec.fed.Q = Q;
        spec.fed.T = T;
        spec.fed.eta_a = eta_a;
        spec.fed.eta_s = eta_s;
        spec.fed.gamma = gamma;
        spec.seed = seed;
        spec.workers = workers;
        RunResult res = run(spec);
        py::list metrics;
        for (const auto& r : res.metrics) metrics.append(record_to_dict(r));
        py::dict out;
        out["metrics"] = metrics;
        out["diverged"] = res.diverged;
        out["final_x"] = res.final_x;
        out["psi_star"] =
            res.psi_star ? py::cast(*res.psi_star) : py::none();
        out["csv"] = metrics_csv_string(res.metrics);
        return out;
      },
      py::arg("algo"), py::arg("n"), py::arg("p"), py::arg("hetero"),
      py::arg("sigma"), py::arg("Q"), py::arg("T"), py::arg("eta_a"),
      py::arg("eta_s"), py::arg("gamma"), py::arg("reg"), py::arg("seed") = 0,
      py::arg("workers") = 1,
      "One simulator run on a generated composite quadratic; returns metrics "
      "rows, the CSV text, and the final iterate.");

  m.def(
      "run_verification",
      [](std::uint64_t seed) {
        VerifyOptions opts;
        opts.seed = seed;
        py::list out;
        for (const auto& c : run_verification(opts)) {
          py::dict d;
          d["name"] = c.name;
          d["pass"] = c.pass;
          d["stat"] = c.stat;
          d["threshold"] = c.threshold;
          d["note"] = c.note;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 20240907);

  m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));
  m.def(
      "partition_sorted_by_label",
      [](const Mat& features, const IntVec& labels, int n) {
        Dataset ds;
        ds.features = features;
        ds.labels = labels;
        ds.num_classes = labels.size() ? labels.maxCoeff() + 1 : 0;
        std::vector<std::vector<int>> out;
        for (auto& s : partition_sorted_by_label(ds, n))
          out.push_back(std::move(s.sample_indices));
        return out;
      },
      py::arg("features"), py::arg("labels"), py::arg("n"));
  m.def(
      "partition_dirichlet",
      [](const Mat& features, const IntVec& labels, int n, double alpha,
         std::uint64_t seed) {
        Dataset ds;
        ds.features = features;
        ds.labels = labels;
        ds.num_classes = labels.size() ? labels.maxCoeff() + 1 : 0;
        RngStream rng(seed, 0xfffffffeULL);
        std::vector<std::vector<int>> out;
        for (auto& s : partition_dirichlet(ds, n, alpha, rng))
          out.push_back(std::move(s.sample_indices));
        return out;
      },
      py::arg("features"), py::arg("labels"), py::arg("n"), py::arg("alpha"),
      py::arg("seed") = 0);
}
