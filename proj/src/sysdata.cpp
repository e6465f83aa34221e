#include "tct/sysdata.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <Eigen/SVD>

#include "tct/errors.hpp"
#include "tct/rng.hpp"

namespace tct {

namespace {

std::string dim_str(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

// Largest eigenvalue of a symmetric matrix with an exact-diagonal fast path
// (the common bound matrices are -I and c*I; a dense eigensolve on a
// rho x rho matrix would dominate otherwise).
double sym_lambda_max(const Mat& m) {
  bool diagonal = true;
  for (int j = 0; j < m.cols() && diagonal; ++j)
    for (int i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != 0.0) {
        diagonal = false;
        break;
      }
  if (diagonal) return m.diagonal().maxCoeff();
  return lambda_max(SymMat(m));
}

double smallest_singular_ratio(const Mat& m, double* smallest = nullptr) {
  Eigen::JacobiSVD<Mat> svd(m);
  const Vec sv = svd.singularValues();
  if (smallest != nullptr) *smallest = sv.size() > 0 ? sv(sv.size() - 1) : 0.0;
  if (sv.size() == 0 || sv(0) == 0.0) return 0.0;
  return sv(sv.size() - 1) / sv(0);
}

}  // namespace

LtiModel::LtiModel(Mat a_in, Mat b_in) : a(std::move(a_in)), b(std::move(b_in)) {
  if (a.rows() != a.cols())
    throw DimensionMismatch("model: A must be square, got " + dim_str(a));
  if (b.rows() != a.rows())
    throw DimensionMismatch("model: B has " + std::to_string(b.rows()) +
                            " rows but A is " + dim_str(a));
  if (a.rows() < 1 || b.cols() < 1)
    throw DimensionMismatch("model: need at least one state and one input");
  if (!all_finite(a) || !all_finite(b))
    throw BadProblem("model: entries must be finite");
}

NoiseBound::NoiseBound(Mat q_d, Mat s_d, Mat r_d)
    : q_d_(SymMat(std::move(q_d)).mat()),
      s_d_(std::move(s_d)),
      r_d_(SymMat(std::move(r_d)).mat()) {
  if (s_d_.rows() != q_d_.rows() || s_d_.cols() != r_d_.rows())
    throw DimensionMismatch("noise bound: s_d is " + dim_str(s_d_) +
                            " but q_d is " + dim_str(q_d_) + " and r_d is " +
                            dim_str(r_d_));
  if (!all_finite(s_d_)) throw BadProblem("noise bound: entries must be finite");
  if (sym_lambda_max(q_d_) >= 0.0)
    throw BadProblem("noise bound: q_d must be negative definite");
}

NoiseBound box_noise_bound(double wbar, int rho, int n_w) {
  if (wbar < 0.0) throw BadProblem("box noise bound: wbar must be >= 0");
  if (rho < 1 || n_w < 1)
    throw BadProblem("box noise bound: rho and n_w must be >= 1");
  return NoiseBound(-Mat::Identity(rho, rho), Mat::Zero(rho, n_w),
                    wbar * wbar * static_cast<double>(rho) *
                        Mat::Identity(n_w, n_w));
}

std::optional<double> box_bound_level(const NoiseBound& bound) {
  const Mat& q = bound.q_d();
  if (q != Mat(-Mat::Identity(q.rows(), q.cols()))) return std::nullopt;
  if (!bound.s_d().isZero(0.0)) return std::nullopt;
  const Mat& r = bound.r_d();
  const double level = r(0, 0);
  if (r != Mat(level * Mat::Identity(r.rows(), r.cols()))) return std::nullopt;
  return level;
}

ExperimentData::ExperimentData(Mat states, Mat inputs, int rho, Mat b_w,
                               std::optional<Mat> retained_noise)
    : states_(std::move(states)),
      inputs_(std::move(inputs)),
      b_w_(std::move(b_w)),
      rho_(rho),
      noise_(std::move(retained_noise)) {
  if (states_.cols() != inputs_.cols() + 1)
    throw DimensionMismatch(
        "experiment: need one more state column than input columns, got " +
        dim_str(states_) + " states and " + dim_str(inputs_) + " inputs");
  if (rho_ < 1 || rho_ > inputs_.cols())
    throw BadProblem("experiment: rho must lie in [1, input count], got " +
                     std::to_string(rho_));
  if (b_w_.rows() != states_.rows())
    throw DimensionMismatch("experiment: b_w has " +
                            std::to_string(b_w_.rows()) + " rows for " +
                            std::to_string(states_.rows()) + " states");
  if (b_w_.cols() < 1)
    throw BadProblem("experiment: b_w needs at least one column");
  if (!all_finite(states_) || !all_finite(inputs_) || !all_finite(b_w_))
    throw BadProblem("experiment: entries must be finite");
  if (noise_.has_value() &&
      (noise_->rows() != b_w_.cols() || noise_->cols() != inputs_.cols()))
    throw DimensionMismatch("experiment: retained noise shape mismatch");
  if (smallest_singular_ratio(b_w_) <= 1e-10)
    throw BadProblem("experiment: b_w must have full column rank");

  Mat stacked(states_.rows() + inputs_.rows(), rho_);
  stacked.topRows(states_.rows()) = states_.leftCols(rho_);
  stacked.bottomRows(inputs_.rows()) = inputs_.leftCols(rho_);
  smallest_singular_ratio(stacked, &richness_);
}

ExperimentData generate_experiment(const LtiModel& model, const Mat& b_w,
                                   int rho, double input_lo, double input_hi,
                                   double wbar, uint64_t seed, int tail) {
  if (rho < 1) throw BadProblem("generate: rho must be >= 1");
  if (tail < 0) throw BadProblem("generate: tail must be >= 0");
  if (wbar < 0.0) throw BadProblem("generate: wbar must be >= 0");
  if (input_hi < input_lo)
    throw BadProblem("generate: empty input range");
  if (b_w.rows() != model.n())
    throw DimensionMismatch("generate: b_w rows must match state count");

  const int n = model.n();
  const int m = model.m();
  const int n_w = static_cast<int>(b_w.cols());
  const int total = rho + tail;

  Mat states = Mat::Zero(n, total + 1);
  Mat inputs(m, total);
  Mat noise(n_w, total);
  Rng rng(seed);
  for (int t = 0; t < total; ++t) {
    for (int i = 0; i < m; ++i) inputs(i, t) = rng.uniform(input_lo, input_hi);
    for (int i = 0; i < n_w; ++i) noise(i, t) = rng.uniform(-wbar, wbar);
    states.col(t + 1) =
        model.a * states.col(t) + model.b * inputs.col(t) + b_w * noise.col(t);
  }

  ExperimentData data(std::move(states), std::move(inputs), rho, b_w,
                      std::move(noise));
  data.seed = seed;
  return data;
}

DataRep assemble_theta(const ExperimentData& data, const NoiseBound& bound) {
  const int n = data.n();
  const int m = data.m();
  const int n_w = data.n_w();
  const int rho = data.rho();
  if (bound.rho() != rho)
    throw DimensionMismatch("theta: bound covers " +
                            std::to_string(bound.rho()) + " samples, data has " +
                            std::to_string(rho));
  if (bound.n_w() != n_w)
    throw DimensionMismatch("theta: bound disturbance width " +
                            std::to_string(bound.n_w()) + " vs b_w width " +
                            std::to_string(n_w));

  const int zdim = n + m;
  Mat factor = Mat::Zero(zdim + n, rho + n_w);
  factor.block(0, 0, n, rho) = -data.x();
  factor.block(n, 0, m, rho) = -data.u();
  factor.block(zdim, 0, n, rho) = data.x_plus();
  factor.block(zdim, rho, n, n_w) = data.b_w();

  Mat phi(rho + n_w, rho + n_w);
  phi.topLeftCorner(rho, rho) = bound.q_d();
  phi.topRightCorner(rho, n_w) = bound.s_d();
  phi.bottomLeftCorner(n_w, rho) = bound.s_d().transpose();
  phi.bottomRightCorner(n_w, n_w) = bound.r_d();

  DataRep rep;
  rep.theta = SymMat(factor * phi * factor.transpose()).mat();
  rep.zdim = zdim;
  rep.n = n;
  rep.q_c = rep.theta.topLeftCorner(zdim, zdim);
  rep.s_c = rep.theta.topRightCorner(zdim, n);
  rep.r_c = rep.theta.bottomRightCorner(n, n);
  return rep;
}

Mat membership_form(const DataRep& rep, const Mat& ab) {
  if (ab.rows() != rep.n || ab.cols() != rep.zdim)
    throw DimensionMismatch("membership: candidate must be " +
                            std::to_string(rep.n) + "x" +
                            std::to_string(rep.zdim) + ", got " + dim_str(ab));
  const Mat z = ab.transpose();
  Mat form = z.transpose() * rep.q_c * z + z.transpose() * rep.s_c +
             rep.s_c.transpose() * z + rep.r_c;
  return SymMat(form).mat();
}

bool contains(const DataRep& rep, const Mat& ab, double tol) {
  return is_psd(SymMat(membership_form(rep, ab)), tol);
}

SetBounds consistent_set_bounds(const DataRep& rep) {
  const SymEig eig = sym_eig(SymMat(rep.q_c));
  const double qmax = eig.values(eig.values.size() - 1);
  if (qmax >= 0.0)
    throw UnboundedSet(
        "consistent set: q_c is not negative definite (largest eigenvalue " +
        std::to_string(qmax) + "); data not rich enough");
  const Mat q_inv = eig.vectors *
                    eig.values.cwiseInverse().asDiagonal() *
                    eig.vectors.transpose();

  SetBounds out;
  out.center = -rep.s_c.transpose() * q_inv;
  const Mat schur =
      SymMat(rep.r_c - rep.s_c.transpose() * q_inv * rep.s_c).mat();
  const double top = std::max(0.0, lambda_max(SymMat(schur)));
  out.radius = std::sqrt(top / (-qmax));
  out.a_norm_bound = spectral_norm(out.center.leftCols(rep.n)) + out.radius;
  return out;
}

Mat input_power_stack(const Mat& a, const Mat& b, int s) {
  if (s < 1) throw BadProblem("input power stack: s must be >= 1");
  if (a.rows() != a.cols() || b.rows() != a.rows())
    throw DimensionMismatch("input power stack: incompatible A, B");
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(b.cols());
  Mat out(n, s * m);
  Mat power = b;  // A^0 B
  for (int i = s - 1; i >= 0; --i) {
    out.middleCols(i * m, m) = power;
    if (i > 0) power = a * power;
  }
  return out;
}

LiftedDataRep lift_data(const ExperimentData& data, int s,
                        const NoiseBound& lifted_bound) {
  if (s < 1) throw BadProblem("lift: s must be >= 1");
  const int n = data.n();
  const int m = data.m();
  const int rho = data.rho();
  if (data.tail() < s - 1)
    throw InsufficientTail("lift: horizon " + std::to_string(s) + " needs " +
                           std::to_string(s - 1) + " tail columns, data has " +
                           std::to_string(data.tail()));

  Mat x_plus_s(n, rho);
  for (int j = 0; j < rho; ++j) x_plus_s.col(j) = data.states().col(j + s);
  Mat u_s(s * m, rho);
  for (int j = 0; j < rho; ++j)
    for (int i = 0; i < s; ++i)
      u_s.block(i * m, j, m, 1) = data.inputs().col(j + i);
  const Mat b_w_s = s == 1 ? data.b_w() : Mat(Mat::Identity(n, n));

  const int n_w_s = static_cast<int>(b_w_s.cols());
  if (lifted_bound.rho() != rho || lifted_bound.n_w() != n_w_s)
    throw DimensionMismatch("lift: bound shaped for " +
                            std::to_string(lifted_bound.rho()) + " samples x " +
                            std::to_string(lifted_bound.n_w()) +
                            " disturbances, need " + std::to_string(rho) +
                            " x " + std::to_string(n_w_s));

  const int zdim = n + s * m;
  Mat factor = Mat::Zero(zdim + n, rho + n_w_s);
  factor.block(0, 0, n, rho) = -data.x();
  factor.block(n, 0, s * m, rho) = -u_s;
  factor.block(zdim, 0, n, rho) = x_plus_s;
  factor.block(zdim, rho, n, n_w_s) = b_w_s;

  Mat phi(rho + n_w_s, rho + n_w_s);
  phi.topLeftCorner(rho, rho) = lifted_bound.q_d();
  phi.topRightCorner(rho, n_w_s) = lifted_bound.s_d();
  phi.bottomLeftCorner(n_w_s, rho) = lifted_bound.s_d().transpose();
  phi.bottomRightCorner(n_w_s, n_w_s) = lifted_bound.r_d();

  DataRep rep;
  rep.theta = SymMat(factor * phi * factor.transpose()).mat();
  rep.zdim = zdim;
  rep.n = n;
  rep.q_c = rep.theta.topLeftCorner(zdim, zdim);
  rep.s_c = rep.theta.topRightCorner(zdim, n);
  rep.r_c = rep.theta.bottomRightCorner(n, n);
  return LiftedDataRep{s, std::move(x_plus_s), std::move(u_s), b_w_s,
                       std::move(rep), lifted_bound};
}

NoiseBound lifted_noise_bound(double wbar, const ExperimentData& data,
                              const NoiseBound& bound, int s) {
  if (s < 1) throw BadProblem("lifted noise bound: s must be >= 1");
  if (wbar < 0.0) throw BadProblem("lifted noise bound: wbar must be >= 0");
  if (s == 1) return box_noise_bound(wbar, data.rho(), data.n_w());

  const SetBounds bounds = consistent_set_bounds(assemble_theta(data, bound));
  const double abar = bounds.a_norm_bound;
  double geom = 0.0;
  double power = 1.0;
  for (int i = 0; i < s; ++i) {
    geom += power;
    power *= abar;
  }
  const double gain = geom * spectral_norm(data.b_w()) * wbar;
  const int n = data.n();
  const int rho = data.rho();
  return NoiseBound(-Mat::Identity(rho, rho), Mat::Zero(rho, n),
                    static_cast<double>(rho) * gain * gain *
                        Mat::Identity(n, n));
}

// --- persistence -----------------------------------------------------------

namespace {

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t a = 0;
  size_t b = s.size();
  while (a < b && (std::isspace(static_cast<unsigned char>(s[a])) != 0)) ++a;
  while (b > a && (std::isspace(static_cast<unsigned char>(s[b - 1])) != 0))
    --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& field, int line, int col) {
  const std::string t = trim(field);
  if (t.empty())
    throw ParseError("line " + std::to_string(line) + ", column " +
                     std::to_string(col) + ": empty value");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v))
    throw ParseError("line " + std::to_string(line) + ", column " +
                     std::to_string(col) + ": bad number '" + t + "'");
  return v;
}

long parse_time_index(const std::string& field, int line) {
  const std::string t = trim(field);
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE)
    throw ParseError("line " + std::to_string(line) +
                     ", column 1: bad time index '" + t + "'");
  return v;
}

Mat json_to_mat(const nlohmann::json& j) {
  if (!j.is_array() || j.empty())
    throw SchemaError("descriptor: expected a non-empty matrix array");
  const size_t rows = j.size();
  const size_t cols = j.at(0).size();
  Mat out(static_cast<int>(rows), static_cast<int>(cols));
  for (size_t i = 0; i < rows; ++i) {
    if (!j.at(i).is_array() || j.at(i).size() != cols)
      throw SchemaError("descriptor: ragged matrix rows");
    for (size_t k = 0; k < cols; ++k)
      out(static_cast<int>(i), static_cast<int>(k)) = j.at(i).at(k).get<double>();
  }
  return out;
}

nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

ExperimentData ingest_csv(const std::string& path, long rho,
                          std::optional<Mat> b_w) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw SchemaError("'" + path + "': empty file, expected a header row");
  const std::vector<std::string> header = split_fields(line);
  if (header.empty() || header[0] != "t")
    throw SchemaError("header must start with 't'");
  size_t pos = 1;
  int n = 0;
  while (pos < header.size() &&
         header[pos] == "x" + std::to_string(n + 1)) {
    ++n;
    ++pos;
  }
  int m = 0;
  while (pos < header.size() &&
         header[pos] == "u" + std::to_string(m + 1)) {
    ++m;
    ++pos;
  }
  if (n < 1 || m < 1 || pos != header.size())
    throw SchemaError(
        "header must be t,x1..xn,u1..um with n >= 1 and m >= 1; got '" + line +
        "'");

  std::vector<std::vector<double>> state_rows;
  std::vector<std::vector<double>> input_rows;
  int line_no = 1;
  long expected_t = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) {
      // A blank line is permitted only at the end of the file.
      std::string rest;
      while (std::getline(in, rest))
        if (!trim(rest).empty())
          throw ParseError("line " + std::to_string(line_no) +
                           ": blank row inside the record");
      break;
    }
    const std::vector<std::string> fields = split_fields(line);
    if (static_cast<int>(fields.size()) != 1 + n + m)
      throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(1 + n + m) + " columns, got " +
                        std::to_string(fields.size()));
    const long t = parse_time_index(fields[0], line_no);
    if (t != expected_t)
      throw GapError("line " + std::to_string(line_no) + ": time index " +
                     std::to_string(t) + ", expected " +
                     std::to_string(expected_t));
    ++expected_t;
    std::vector<double> xs(n);
    std::vector<double> us(m);
    for (int i = 0; i < n; ++i)
      xs[i] = parse_double(fields[1 + i], line_no, 2 + i);
    for (int i = 0; i < m; ++i)
      us[i] = parse_double(fields[1 + n + i], line_no, 2 + n + i);
    state_rows.push_back(std::move(xs));
    input_rows.push_back(std::move(us));
  }

  const long rows = static_cast<long>(state_rows.size());
  if (rows < 2)
    throw SchemaError("'" + path + "': need at least two data rows");

  Mat states(n, rows);
  Mat inputs(m, rows - 1);  // the final row's input cells are ignored
  for (long j = 0; j < rows; ++j) {
    for (int i = 0; i < n; ++i) states(i, j) = state_rows[j][i];
    if (j < rows - 1)
      for (int i = 0; i < m; ++i) inputs(i, j) = input_rows[j][i];
  }

  const long effective_rho = rho < 0 ? rows - 1 : rho;
  Mat noise_gain = b_w.has_value() ? *b_w : Mat(Mat::Identity(n, n));
  return ExperimentData(std::move(states), std::move(inputs),
                        static_cast<int>(effective_rho),
                        std::move(noise_gain));
}

void export_csv(const ExperimentData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  const int n = data.n();
  const int m = data.m();
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (int i = 1; i <= m; ++i) out << ",u" << i;
  out << "\n";
  const long rows = data.states().cols();
  for (long t = 0; t < rows; ++t) {
    out << t;
    for (int i = 0; i < n; ++i)
      out << "," << format_value(data.states()(i, t));
    for (int i = 0; i < m; ++i)
      out << ","
          << format_value(t < rows - 1 ? data.inputs()(i, t) : 0.0);
    out << "\n";
  }
  if (!out) throw ParseError("failed writing '" + path + "'");
}

nlohmann::json dataset_descriptor(const ExperimentData& data,
                                  const NoiseBound& bound) {
  nlohmann::json j;
  j["n"] = data.n();
  j["m"] = data.m();
  j["n_w"] = data.n_w();
  j["rho"] = data.rho();
  j["tail"] = data.tail();
  j["b_w"] = mat_to_json(data.b_w());
  if (data.seed.has_value()) j["seed"] = *data.seed;
  const std::optional<double> level = box_bound_level(bound);
  if (level.has_value()) {
    j["noise_bound"] = {{"kind", "box"},
                        {"level", *level},
                        {"rho", bound.rho()},
                        {"n_w", bound.n_w()}};
  } else {
    j["noise_bound"] = {{"kind", "dense"},
                        {"q_d", mat_to_json(bound.q_d())},
                        {"s_d", mat_to_json(bound.s_d())},
                        {"r_d", mat_to_json(bound.r_d())}};
  }
  return j;
}

void write_dataset(const ExperimentData& data, const NoiseBound& bound,
                   const std::string& csv_path) {
  export_csv(data, csv_path);
  std::ofstream out(csv_path + ".json");
  if (!out)
    throw ParseError("cannot open '" + csv_path + ".json' for writing");
  out << dataset_descriptor(data, bound).dump(2) << "\n";
  if (!out) throw ParseError("failed writing '" + csv_path + ".json'");
}

std::pair<ExperimentData, NoiseBound> read_dataset(
    const std::string& csv_path) {
  std::ifstream in(csv_path + ".json");
  if (!in)
    throw ParseError("cannot open descriptor '" + csv_path + ".json'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("descriptor '" + csv_path + ".json': " + e.what());
  }
  try {
    const int rho = j.at("rho").get<int>();
    Mat b_w = json_to_mat(j.at("b_w"));
    ExperimentData data = ingest_csv(csv_path, rho, std::move(b_w));
    if (j.contains("seed")) data.seed = j.at("seed").get<uint64_t>();

    const nlohmann::json& nb = j.at("noise_bound");
    const std::string kind = nb.at("kind").get<std::string>();
    if (kind == "box") {
      const int brho = nb.at("rho").get<int>();
      const int bnw = nb.at("n_w").get<int>();
      const double level = nb.at("level").get<double>();
      NoiseBound bound(-Mat::Identity(brho, brho), Mat::Zero(brho, bnw),
                       level * Mat::Identity(bnw, bnw));
      return {std::move(data), std::move(bound)};
    }
    if (kind == "dense") {
      NoiseBound bound(json_to_mat(nb.at("q_d")), json_to_mat(nb.at("s_d")),
                       json_to_mat(nb.at("r_d")));
      return {std::move(data), std::move(bound)};
    }
    throw SchemaError("descriptor: unknown noise bound kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("descriptor '" + csv_path + ".json': " + e.what());
  }
}

}  // namespace tct
