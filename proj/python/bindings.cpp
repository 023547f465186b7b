#include "loupe/classical.hpp"
#include "loupe/config.hpp"
#include "loupe/evaluate.hpp"
#include "loupe/gradsuite.hpp"
#include "loupe/metrics.hpp"
#include "loupe/mri.hpp"
#include "loupe/sampling.hpp"
#include "loupe/trainer.hpp"

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace loupe;

namespace {

using RArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using CArray = py::array_t<Cx, py::array::c_style | py::array::forcecast>;

template <typename T, typename A>
Tensor<T> from_numpy(A const &a)
{
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<T>(shape, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_numpy(Tensor<T> const &t)
{
  py::array_t<T> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

RTensor real(RArray const &a) { return from_numpy<double>(a); }
CTensor cplx(CArray const &a) { return from_numpy<Cx>(a); }

py::dict sample_dict(KSpaceSample const &s)
{
  py::dict d;
  d["kspace"] = to_numpy(s.kspace);
  d["sens"] = to_numpy(s.sens);
  d["label"] = to_numpy(s.label);
  return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
  m.doc() = "Learned k-space sampling with an unrolled multi-coil reconstruction";

  // Translators run newest first, so the base class goes first.
  auto const base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  m.def("fft2c", [](CArray const &x) { return to_numpy(fft2c(cplx(x))); }, py::arg("image"));
  m.def("ifft2c", [](CArray const &k) { return to_numpy(ifft2c(cplx(k))); }, py::arg("kspace"));
  m.def(
    "uniform", [](std::uint64_t seed, std::vector<std::size_t> shape) {
      Rng rng(seed);
      return to_numpy(uniform(rng, shape));
    },
    py::arg("seed"), py::arg("shape"));

  m.def(
    "sense_forward", [](CArray const &x, CArray const &s, RArray const &mask) {
      return to_numpy(sense_forward(cplx(x), cplx(s), real(mask)));
    },
    py::arg("image"), py::arg("sens"), py::arg("mask"));
  m.def(
    "sense_adjoint", [](CArray const &y, CArray const &s, RArray const &mask) {
      return to_numpy(sense_adjoint(cplx(y), cplx(s), real(mask)));
    },
    py::arg("kspace"), py::arg("sens"), py::arg("mask"));
  m.def(
    "simulate_phantom", [](std::uint64_t seed, std::size_t h, std::size_t w) {
      Rng rng(seed);
      return to_numpy(simulate_phantom(rng, h, w));
    },
    py::arg("seed"), py::arg("height"), py::arg("width"));
  m.def(
    "simulate_coils", [](std::uint64_t seed, std::size_t h, std::size_t w, std::size_t coils) {
      Rng rng(seed);
      return to_numpy(simulate_coils(rng, h, w, coils));
    },
    py::arg("seed"), py::arg("height"), py::arg("width"), py::arg("coils"));
  m.def("read_sample", [](std::filesystem::path const &p) { return sample_dict(read_sample(p)); }, py::arg("path"));

  m.def(
    "probability_map", [](RArray const &w, double a) { return to_numpy(probability_map(real(w), a)); },
    py::arg("logits"), py::arg("slope"));
  m.def(
    "renormalize", [](RArray const &p, double ratio, RArray const &calib) {
      return to_numpy(renormalize(real(p), ratio, real(calib)));
    },
    py::arg("prob"), py::arg("ratio"), py::arg("calib"));
  m.def(
    "centered_calibration", [](std::size_t h, std::size_t w, std::size_t size) {
      return to_numpy(centered_calibration(h, w, size));
    },
    py::arg("height"), py::arg("width"), py::arg("size"));
  m.def(
    "topk_pattern", [](RArray const &p, double ratio, RArray const &calib) {
      return to_numpy(topk_pattern(real(p), ratio, real(calib)));
    },
    py::arg("prob"), py::arg("ratio"), py::arg("calib"));
  m.def(
    "vd_pattern",
    [](std::size_t h, std::size_t w, double ratio, double exponent, RArray const &calib, std::uint64_t seed) {
      Rng rng(seed);
      return to_numpy(vd_pattern(h, w, ratio, exponent, real(calib), rng));
    },
    py::arg("height"), py::arg("width"), py::arg("ratio"), py::arg("exponent"), py::arg("calib"), py::arg("seed"));

  m.def(
    "data_consistency",
    [](CArray const &z, CArray const &b, CArray const &s, RArray const &mask, double lambda, std::size_t n_cg) {
      return to_numpy(data_consistency(cplx(z), cplx(b), cplx(s), real(mask), lambda, n_cg));
    },
    py::arg("z"), py::arg("kspace"), py::arg("sens"), py::arg("mask"), py::arg("lam"), py::arg("n_cg"));
  m.def(
    "zero_filled", [](CArray const &b, CArray const &s, RArray const &mask) {
      return to_numpy(zero_filled(cplx(b), cplx(s), real(mask)));
    },
    py::arg("kspace"), py::arg("sens"), py::arg("mask"));
  m.def(
    "tv_recon",
    [](CArray const &b, CArray const &s, RArray const &mask, double alpha, std::size_t iters) {
      TVConfig cfg;
      cfg.alpha = alpha;
      cfg.iters = iters;
      return to_numpy(tv_recon(cplx(b), cplx(s), real(mask), cfg).image);
    },
    py::arg("kspace"), py::arg("sens"), py::arg("mask"), py::arg("alpha") = 2e-3, py::arg("iters") = 200);

  m.def("psnr", [](CArray const &x, CArray const &ref) { return psnr(cplx(x), cplx(ref)); }, py::arg("x"),
        py::arg("ref"));
  m.def("ssim", [](CArray const &x, CArray const &ref) { return ssim(cplx(x), cplx(ref)); }, py::arg("x"),
        py::arg("ref"));

  m.def(
    "load_checkpoint",
    [](std::filesystem::path const &p) {
      Checkpoint const ck = load_checkpoint(p);
      py::dict params;
      for (auto const &[name, value] : ck.params.entries()) {
        params[py::str(name)] = to_numpy(value);
      }
      py::dict d;
      d["epoch"] = ck.epoch;
      d["val_psnr"] = ck.val_psnr;
      d["config"] = to_json(ck.config).dump();
      d["params"] = params;
      return d;
    },
    py::arg("path"));
  m.def(
    "config_hash", [](std::string const &json_text) {
      return config_hash(run_config_from_json(nlohmann::json::parse(json_text)));
    },
    py::arg("config_json"));
  m.def(
    "validate_config",
    [](std::string const &json_text) {
      RunConfig const c = run_config_from_json(nlohmann::json::parse(json_text));
      c.validate();
      return to_json(c).dump();
    },
    py::arg("config_json"), "Parses and validates a run configuration; returns it with defaults filled in.");

  m.def(
    "gradcheck",
    [](std::string const &suite, std::uint64_t seed) {
      py::list out;
      for (auto const &r : run_gradcheck_suites(suite_group_from_string(suite), seed)) {
        py::dict d;
        d["name"] = r.name;
        d["group"] = r.group;
        d["max_rel_err"] = r.max_rel_err;
        d["threshold"] = r.threshold;
        d["passed"] = r.passed();
        out.append(d);
      }
      return out;
    },
    py::arg("suite") = "all", py::arg("seed") = 7);
}
