#include "ddet/persistence.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ddet/errors.hpp"

namespace ddet::persistence {

namespace {

constexpr char kMagic[4] = {'D', 'D', 'E', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("container is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

std::string number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

int to_int(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw FormatError("");
    return v;
  } catch (const std::exception&) {
    throw FormatError("metadata " + key + " is not an integer: '" + s + "'");
  }
}

double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("");
    return v;
  } catch (const std::exception&) {
    throw FormatError("metadata " + key + " is not a number: '" + s + "'");
  }
}

std::vector<double> as_vector(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

std::string to_string(ContainerKind kind) {
  switch (kind) {
    case ContainerKind::kSnapshotSet: return "snapshot-set";
    case ContainerKind::kPodModel: return "pod-model";
    case ContainerKind::kDmdModel: return "dmd-model";
    case ContainerKind::kRunRecord: return "run-record";
    case ContainerKind::kResults: return "results";
    case ContainerKind::kPlaybackModel: return "playback-model";
  }
  return "unknown";
}

bool Layout::same_grid(const Layout& o) const {
  return nx == o.nx && ny == o.ny && ng == o.ng && dx == o.dx && dy == o.dy;
}

std::string Layout::describe() const {
  std::ostringstream s;
  s << "nx=" << nx << " ny=" << ny << " ng=" << ng << " dx=" << dx << " dy=" << dy
    << " t0=" << t0 << " dt=" << dt << " steps=" << num_steps << " stacking=" << stacking;
  return s.str();
}

// --- Container ----------------------------------------------------------------

void Container::add(const std::string& name, const Eigen::MatrixXd& m) {
  NamedArray a;
  a.name = name;
  a.rows = static_cast<std::uint64_t>(m.rows());
  a.cols = static_cast<std::uint64_t>(m.cols());
  a.data.assign(m.data(), m.data() + m.size());
  arrays.push_back(std::move(a));
}

void Container::add(const std::string& name, const std::vector<double>& v) {
  NamedArray a;
  a.name = name;
  a.rows = v.size();
  a.cols = 1;
  a.data = v;
  arrays.push_back(std::move(a));
}

void Container::add_complex(const std::string& name, const Eigen::MatrixXcd& m) {
  add(name + "_re", Eigen::MatrixXd(m.real()));
  add(name + "_im", Eigen::MatrixXd(m.imag()));
}

bool Container::has(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return true;
  return false;
}

const NamedArray& Container::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw FormatError("container has no array '" + name + "'");
}

Eigen::MatrixXd Container::matrix(const std::string& name) const {
  const NamedArray& a = find(name);
  return Eigen::Map<const Eigen::MatrixXd>(a.data.data(), static_cast<Eigen::Index>(a.rows),
                                           static_cast<Eigen::Index>(a.cols));
}

std::vector<double> Container::vector(const std::string& name) const { return find(name).data; }

Eigen::MatrixXcd Container::complex_matrix(const std::string& name) const {
  const Eigen::MatrixXd re = matrix(name + "_re");
  const Eigen::MatrixXd im = matrix(name + "_im");
  if (re.rows() != im.rows() || re.cols() != im.cols())
    throw FormatError("complex array '" + name + "' has mismatched parts");
  Eigen::MatrixXcd out(re.rows(), re.cols());
  out.real() = re;
  out.imag() = im;
  return out;
}

const std::string& Container::meta(const std::string& key) const {
  const auto it = metadata.find(key);
  if (it == metadata.end()) throw FormatError("container has no metadata '" + key + "'");
  return it->second;
}

std::vector<std::uint8_t> encode(const Container& c) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(c.kind));
  w.i32(c.layout.nx);
  w.i32(c.layout.ny);
  w.i32(c.layout.ng);
  w.i32(c.layout.num_steps);
  w.f64(c.layout.dx);
  w.f64(c.layout.dy);
  w.f64(c.layout.t0);
  w.f64(c.layout.dt);
  w.str(c.layout.stacking);
  w.u32(static_cast<std::uint32_t>(c.metadata.size()));
  for (const auto& [k, v] : c.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    if (a.data.size() != a.rows * a.cols)
      throw ShapeError("array '" + a.name + "' size does not match its shape");
    w.str(a.name);
    w.u64(a.rows);
    w.u64(a.cols);
    for (double v : a.data) w.f64(v);
  }
  return w.take();
}

Container decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("not a DDET container (bad magic)");
  Reader r(bytes);
  r.u32();
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw FormatError("container version " + std::to_string(version) + " is not supported");
  Container c;
  const std::uint32_t kind = r.u32();
  if (kind < 1 || kind > 6) throw FormatError("unknown container kind " + std::to_string(kind));
  c.kind = static_cast<ContainerKind>(kind);
  c.layout.nx = r.i32();
  c.layout.ny = r.i32();
  c.layout.ng = r.i32();
  c.layout.num_steps = r.i32();
  c.layout.dx = r.f64();
  c.layout.dy = r.f64();
  c.layout.t0 = r.f64();
  c.layout.dt = r.f64();
  c.layout.stacking = r.str();
  const std::uint32_t nmeta = r.u32();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    c.metadata[std::move(k)] = r.str();
  }
  const std::uint32_t narr = r.u32();
  for (std::uint32_t i = 0; i < narr; ++i) {
    NamedArray a;
    a.name = r.str();
    a.rows = r.u64();
    a.cols = r.u64();
    if (a.cols != 0 && a.rows > r.remaining() / 8 / a.cols)
      throw FormatError("array '" + a.name + "' declares more data than the file holds");
    a.data.resize(a.rows * a.cols);
    for (double& v : a.data) v = r.f64();
    c.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw FormatError("container has trailing bytes");
  return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  const std::vector<std::uint8_t> bytes = encode(c);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode(bytes);
}

// --- typed wrappers -------------------------------------------------------------

Layout layout_of(const lowrank::SnapshotMatrix& m) {
  Layout l;
  l.nx = m.nx;
  l.ny = m.ny;
  l.ng = m.ng;
  l.num_steps = static_cast<int>(m.cols());
  l.t0 = m.t0;
  l.dt = m.dt;
  return l;
}

Layout layout_of(const drivers::RunRecord& run) {
  Layout l;
  l.nx = run.nx;
  l.ny = run.ny;
  l.ng = run.ng;
  l.num_steps = static_cast<int>(run.steps.size());
  l.dx = run.dx.empty() ? 0.0 : run.dx.front();
  l.dy = run.dy.empty() ? 0.0 : run.dy.front();
  l.t0 = run.time.t0;
  l.dt = run.time.dt;
  return l;
}

Container snapshots_to_container(const std::vector<lowrank::SnapshotMatrix>& set) {
  if (set.empty()) throw ShapeError("empty snapshot set");
  Container c;
  c.kind = ContainerKind::kSnapshotSet;
  c.layout = layout_of(set.front());
  bool uniform = true;
  for (const auto& m : set) {
    c.add(m.name, m.data);
    uniform = uniform && m.uniform;
  }
  c.metadata["uniform_time"] = uniform ? "1" : "0";
  if (!uniform) c.metadata["warning"] = "non-uniform time grid; DMD results are not meaningful";
  return c;
}

std::vector<lowrank::SnapshotMatrix> snapshots_from_container(const Container& c) {
  if (c.kind != ContainerKind::kSnapshotSet)
    throw FormatError("expected a snapshot-set container, found " + to_string(c.kind));
  const bool uniform = !c.metadata.count("uniform_time") || c.meta("uniform_time") == "1";
  std::vector<lowrank::SnapshotMatrix> out;
  for (const auto& a : c.arrays) {
    lowrank::SnapshotMatrix m;
    m.name = a.name;
    m.data = c.matrix(a.name);
    m.nx = c.layout.nx;
    m.ny = c.layout.ny;
    m.ng = c.layout.ng;
    m.t0 = c.layout.t0;
    m.dt = c.layout.dt;
    m.uniform = uniform;
    out.push_back(std::move(m));
  }
  return out;
}

Container model_to_container(const std::string& matrix, const lowrank::CompressedModel& model,
                             const Layout& layout) {
  Container c;
  c.layout = layout;
  c.metadata["matrix"] = matrix;
  c.metadata["method"] = lowrank::model_kind(model);
  c.metadata["rank"] = std::to_string(lowrank::model_rank(model));
  if (const auto* pod = std::get_if<lowrank::PodModel>(&model)) {
    c.kind = ContainerKind::kPodModel;
    c.metadata["xi"] = number(pod->xi);
    c.metadata["xi_achieved"] = number(pod->xi_achieved);
    c.add("mean", Eigen::MatrixXd(pod->mean));
    c.add("modes", pod->modes);
    c.add("coeffs", pod->coeffs);
    c.add("sigma", Eigen::MatrixXd(pod->sigma));
  } else if (const auto* dmd = std::get_if<lowrank::DmdModel>(&model)) {
    c.kind = ContainerKind::kDmdModel;
    c.metadata["dt"] = number(dmd->dt);
    c.metadata["trained_columns"] = std::to_string(dmd->trained_columns);
    c.metadata["rows"] = std::to_string(lowrank::model_rows(model));
    c.add_complex("modes", dmd->modes);
    c.add_complex("lambda", Eigen::MatrixXcd(dmd->lambda));
    c.add_complex("omega", Eigen::MatrixXcd(dmd->omega));
    c.add_complex("beta", Eigen::MatrixXcd(dmd->beta));
    c.add("equilibrium", Eigen::MatrixXd(dmd->equilibrium));
    c.add("sigma", Eigen::MatrixXd(dmd->sigma));
  } else {
    c.kind = ContainerKind::kPlaybackModel;
    c.add("data", std::get<lowrank::PlaybackModel>(model).data);
  }
  return c;
}

lowrank::CompressedModel model_from_container(const Container& c) {
  switch (c.kind) {
    case ContainerKind::kPodModel: {
      lowrank::PodModel m;
      m.mean = c.matrix("mean");
      m.modes = c.matrix("modes");
      m.coeffs = c.matrix("coeffs");
      m.sigma = c.matrix("sigma");
      m.rank = to_int(c.meta("rank"), "rank");
      m.xi = to_double(c.meta("xi"), "xi");
      m.xi_achieved = to_double(c.meta("xi_achieved"), "xi_achieved");
      if (m.modes.rows() != m.mean.size() || m.modes.cols() != m.rank ||
          m.coeffs.rows() != m.rank)
        throw FormatError("POD model arrays are inconsistent");
      return m;
    }
    case ContainerKind::kDmdModel: {
      lowrank::DmdModel m;
      const std::string& method = c.meta("method");
      if (method == "dmd") m.variant = lowrank::DmdVariant::kPlain;
      else if (method == "dmd-e") m.variant = lowrank::DmdVariant::kEquilibriumSubtracted;
      else throw FormatError("unknown DMD variant '" + method + "'");
      m.modes = c.complex_matrix("modes");
      m.lambda = c.complex_matrix("lambda");
      m.omega = c.complex_matrix("omega");
      m.beta = c.complex_matrix("beta");
      m.equilibrium = c.matrix("equilibrium");
      m.sigma = c.matrix("sigma");
      m.rank = to_int(c.meta("rank"), "rank");
      m.dt = to_double(c.meta("dt"), "dt");
      m.trained_columns = to_int(c.meta("trained_columns"), "trained_columns");
      if (m.modes.cols() != m.rank || m.lambda.size() != m.rank || m.beta.size() != m.rank)
        throw FormatError("DMD model arrays are inconsistent");
      if (m.modes.rows() == 0 && m.equilibrium.size() == 0) {
        const int rows = to_int(c.meta("rows"), "rows");
        m.modes.resize(rows, 0);
      }
      return m;
    }
    case ContainerKind::kPlaybackModel:
      return lowrank::PlaybackModel{c.matrix("data")};
    default:
      throw FormatError("container of kind " + to_string(c.kind) + " is not a model");
  }
}

Container run_to_container(const drivers::RunRecord& run) {
  Container c;
  c.kind = ContainerKind::kRunRecord;
  c.layout = layout_of(run);
  c.metadata["kind"] = run.kind;
  c.add("dx", run.dx);
  c.add("dy", run.dy);
  c.add("initial_T", run.initial.temperature);
  c.add("initial_E_cell", run.initial.e_cell);
  c.add("initial_E_face", run.initial.e_face);
  c.add("initial_F_face", run.initial.f_face);

  const auto n = static_cast<Eigen::Index>(run.steps.size());
  const auto nc = static_cast<Eigen::Index>(run.initial.temperature.size());
  const auto nf = static_cast<Eigen::Index>(run.initial.e_face.size());
  Eigen::MatrixXd t(nc, n), ec(nc, n), ef(nf, n), ff(nf, n);
  std::vector<double> iters, change, newton, gres, mres, defect;
  std::vector<std::size_t> neg, viol, fall;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& st = run.steps[static_cast<std::size_t>(k)];
    t.col(k) = Eigen::Map<const Eigen::VectorXd>(st.state.temperature.data(), nc);
    ec.col(k) = Eigen::Map<const Eigen::VectorXd>(st.state.e_cell.data(), nc);
    ef.col(k) = Eigen::Map<const Eigen::VectorXd>(st.state.e_face.data(), nf);
    ff.col(k) = Eigen::Map<const Eigen::VectorXd>(st.state.f_face.data(), nf);
    iters.push_back(st.iterations);
    change.push_back(st.last_change);
    newton.push_back(st.newton_iterations);
    gres.push_back(st.grey_residual);
    mres.push_back(st.multigroup_residual);
    defect.push_back(st.energy_defect);
    neg.push_back(st.negative_intensities);
    viol.push_back(st.closure_violations);
    fall.push_back(st.closure_fallbacks);
  }
  c.add("T", t);
  c.add("E_cell", ec);
  c.add("E_face", ef);
  c.add("F_face", ff);
  c.add("iterations", iters);
  c.add("last_change", change);
  c.add("newton_iterations", newton);
  c.add("grey_residual", gres);
  c.add("multigroup_residual", mres);
  c.add("energy_defect", defect);
  c.add("negative_intensities", as_vector(neg));
  c.add("closure_violations", as_vector(viol));
  c.add("closure_fallbacks", as_vector(fall));
  return c;
}

drivers::RunRecord run_from_container(const Container& c) {
  if (c.kind != ContainerKind::kRunRecord)
    throw FormatError("expected a run-record container, found " + to_string(c.kind));
  drivers::RunRecord run;
  run.kind = c.meta("kind");
  run.nx = c.layout.nx;
  run.ny = c.layout.ny;
  run.ng = c.layout.ng;
  run.dx = c.vector("dx");
  run.dy = c.vector("dy");
  run.time = {c.layout.t0, c.layout.dt, c.layout.num_steps};
  const std::size_t nc = static_cast<std::size_t>(run.nx) * static_cast<std::size_t>(run.ny);
  const std::size_t nf = static_cast<std::size_t>(run.nx + 1) * run.ny +
                         static_cast<std::size_t>(run.nx) * (run.ny + 1);
  if (run.dx.size() != static_cast<std::size_t>(run.nx) ||
      run.dy.size() != static_cast<std::size_t>(run.ny))
    throw FormatError("run record cell widths do not match its layout");
  run.initial = {c.vector("initial_E_cell"), c.vector("initial_E_face"),
                 c.vector("initial_F_face"), c.vector("initial_T")};
  const Eigen::MatrixXd t = c.matrix("T"), ec = c.matrix("E_cell"), ef = c.matrix("E_face"),
                        ff = c.matrix("F_face");
  const auto n = static_cast<Eigen::Index>(c.layout.num_steps);
  if (t.rows() != static_cast<Eigen::Index>(nc) || ec.rows() != t.rows() ||
      ef.rows() != static_cast<Eigen::Index>(nf) || ff.rows() != ef.rows() || t.cols() != n ||
      ec.cols() != n || ef.cols() != n || ff.cols() != n || run.initial.temperature.size() != nc ||
      run.initial.e_face.size() != nf)
    throw FormatError("run record arrays do not match its layout");
  const auto per_step = [&](const char* name) {
    std::vector<double> v = c.vector(name);
    if (v.size() != static_cast<std::size_t>(n))
      throw FormatError(std::string("run record array ") + name + " has the wrong length");
    return v;
  };
  const auto iters = per_step("iterations"), change = per_step("last_change"),
             newton = per_step("newton_iterations"), gres = per_step("grey_residual"),
             mres = per_step("multigroup_residual"), defect = per_step("energy_defect"),
             neg = per_step("negative_intensities"), viol = per_step("closure_violations"),
             fall = per_step("closure_fallbacks");
  const auto col = [](const Eigen::MatrixXd& m, Eigen::Index k) {
    return std::vector<double>(m.col(k).data(), m.col(k).data() + m.rows());
  };
  for (Eigen::Index k = 0; k < n; ++k) {
    drivers::StepRecord st;
    st.state = {col(ec, k), col(ef, k), col(ff, k), col(t, k)};
    const auto s = static_cast<std::size_t>(k);
    st.iterations = static_cast<int>(iters[s]);
    st.last_change = change[s];
    st.newton_iterations = static_cast<int>(newton[s]);
    st.grey_residual = gres[s];
    st.multigroup_residual = mres[s];
    st.energy_defect = defect[s];
    st.negative_intensities = static_cast<std::size_t>(neg[s]);
    st.closure_violations = static_cast<std::size_t>(viol[s]);
    st.closure_fallbacks = static_cast<std::size_t>(fall[s]);
    run.steps.push_back(std::move(st));
  }
  return run;
}

}  // namespace ddet::persistence
