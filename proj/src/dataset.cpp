#include "momo/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace momo {

static_assert(std::endian::native == std::endian::little,
              "dataset records are little-endian; add byte swapping before "
              "building on a big-endian target");

OfflineDataset::OfflineDataset(int state_dim, int action_dim, Vec action_low,
                               Vec action_high)
    : state_dim_(state_dim),
      action_dim_(action_dim),
      action_low_(std::move(action_low)),
      action_high_(std::move(action_high)) {
  require(state_dim_ > 0 && action_dim_ > 0,
          "OfflineDataset: dimensions must be positive");
  require(action_low_.size() == action_dim_ &&
              action_high_.size() == action_dim_,
          "OfflineDataset: action bound size mismatch");
}

void OfflineDataset::add(Transition t) {
  require(t.s.size() == state_dim_ && t.s2.size() == state_dim_ &&
              t.a.size() == action_dim_,
          "OfflineDataset::add: dimension mismatch");
  require(t.s.allFinite() && t.a.allFinite() && t.s2.allFinite() &&
              std::isfinite(t.r),
          "OfflineDataset::add: non-finite transition");
  const double tol = 1e-9;
  for (int i = 0; i < action_dim_; ++i) {
    require(t.a[i] >= action_low_[i] - tol && t.a[i] <= action_high_[i] + tol,
            "OfflineDataset::add: action outside bounds");
  }
  transitions_.push_back(std::move(t));
}

std::pair<Vec, Vec> OfflineDataset::action_box(double expand) const {
  require(!empty(), "OfflineDataset::action_box: empty dataset");
  Vec lo = transitions_[0].a, hi = transitions_[0].a;
  for (const auto& t : transitions_) {
    lo = lo.cwiseMin(t.a);
    hi = hi.cwiseMax(t.a);
  }
  Vec range = hi - lo;
  return {lo - expand * range, hi + expand * range};
}

bool OfflineDataset::operator==(const OfflineDataset& o) const {
  if (state_dim_ != o.state_dim_ || action_dim_ != o.action_dim_) return false;
  if (action_low_ != o.action_low_ || action_high_ != o.action_high_)
    return false;
  if (transitions_.size() != o.transitions_.size()) return false;
  auto deq = [](double a, double b) {
    return a == b || (std::isnan(a) && std::isnan(b));
  };
  if (meta_.generator != o.meta_.generator || meta_.seed != o.meta_.seed ||
      meta_.episodes != o.meta_.episodes ||
      !deq(meta_.mean_return, o.meta_.mean_return) ||
      !deq(meta_.scripted_mean_return, o.meta_.scripted_mean_return))
    return false;
  for (size_t i = 0; i < transitions_.size(); ++i) {
    const auto& a = transitions_[i];
    const auto& b = o.transitions_[i];
    if (a.s != b.s || a.a != b.a || a.r != b.r || a.s2 != b.s2 ||
        a.terminal != b.terminal)
      return false;
  }
  return true;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_vec(const Vec& v) {
  std::string out;
  for (long i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt_double(v[i]);
  }
  return out;
}

Vec parse_vec(const std::string& s, int expected, const char* what) {
  Vec out(expected);
  std::stringstream ss(s);
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= expected)
      throw LoadError(LoadError::Kind::DimMismatch,
                      std::string(what) + ": too many components");
    out[i++] = std::strtod(tok.c_str(), nullptr);
  }
  if (i != expected)
    throw LoadError(LoadError::Kind::DimMismatch,
                    std::string(what) + ": too few components");
  return out;
}

}  // namespace

void save_dataset(const std::string& path, const OfflineDataset& ds) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw LoadError(LoadError::Kind::Io, "cannot open " + path);

  std::ostringstream h;
  h << "MOMO-DATA v" << kDatasetFormatVersion                      //
    << " state_dim=" << ds.state_dim()                             //
    << " action_dim=" << ds.action_dim()                           //
    << " count=" << ds.size()                                      //
    << " action_low=" << fmt_vec(ds.action_low())                  //
    << " action_high=" << fmt_vec(ds.action_high())                //
    << " generator=" << ds.meta().generator                        //
    << " seed=" << ds.meta().seed                                  //
    << " episodes=" << ds.meta().episodes                          //
    << " mean_return=" << fmt_double(ds.meta().mean_return)        //
    << " scripted_mean_return="
    << fmt_double(ds.meta().scripted_mean_return) << "\n";
  f << h.str();

  const int S = ds.state_dim(), A = ds.action_dim();
  std::vector<double> rec(2 * S + A + 2);
  for (long i = 0; i < ds.size(); ++i) {
    const Transition& t = ds[i];
    double* p = rec.data();
    std::memcpy(p, t.s.data(), S * sizeof(double));
    p += S;
    std::memcpy(p, t.a.data(), A * sizeof(double));
    p += A;
    *p++ = t.r;
    std::memcpy(p, t.s2.data(), S * sizeof(double));
    p += S;
    *p = t.terminal ? 1.0 : 0.0;
    f.write(reinterpret_cast<const char*>(rec.data()),
            static_cast<std::streamsize>(rec.size() * sizeof(double)));
  }
  if (!f) throw LoadError(LoadError::Kind::Io, "write failed for " + path);
}

OfflineDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError(LoadError::Kind::Io, "cannot open " + path);

  std::string header;
  if (!std::getline(f, header))
    throw LoadError(LoadError::Kind::Truncated, "missing header in " + path);

  std::stringstream hs(header);
  std::string magic, version;
  hs >> magic >> version;
  if (magic != "MOMO-DATA")
    throw LoadError(LoadError::Kind::BadFormat,
                    "not a momo dataset file: " + path);
  if (version != "v" + std::to_string(kDatasetFormatVersion))
    throw LoadError(LoadError::Kind::VersionMismatch,
                    "unsupported dataset version '" + version + "' in " + path);

  std::map<std::string, std::string> kv;
  std::string tok;
  while (hs >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw LoadError(LoadError::Kind::BadFormat,
                      "malformed header token '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw LoadError(LoadError::Kind::BadFormat,
                      "header missing key '" + key + "'");
    return it->second;
  };

  const int S = std::stoi(need("state_dim"));
  const int A = std::stoi(need("action_dim"));
  const long count = std::stol(need("count"));
  if (S <= 0 || A <= 0)
    throw LoadError(LoadError::Kind::DimMismatch,
                    "non-positive dimensions in " + path);
  if (count < 0)
    throw LoadError(LoadError::Kind::BadFormat, "negative count in " + path);

  OfflineDataset ds(S, A, parse_vec(need("action_low"), A, "action_low"),
                    parse_vec(need("action_high"), A, "action_high"));
  ds.meta().generator = need("generator");
  ds.meta().seed = std::stoull(need("seed"));
  ds.meta().episodes = std::stol(need("episodes"));
  ds.meta().mean_return = std::strtod(need("mean_return").c_str(), nullptr);
  ds.meta().scripted_mean_return =
      std::strtod(need("scripted_mean_return").c_str(), nullptr);

  const size_t rec_doubles = 2 * S + A + 2;
  std::vector<double> rec(rec_doubles);
  for (long i = 0; i < count; ++i) {
    f.read(reinterpret_cast<char*>(rec.data()),
           static_cast<std::streamsize>(rec_doubles * sizeof(double)));
    if (f.gcount() !=
        static_cast<std::streamsize>(rec_doubles * sizeof(double)))
      throw LoadError(LoadError::Kind::Truncated,
                      "truncated record " + std::to_string(i) + " in " + path);
    Transition t;
    const double* p = rec.data();
    t.s = Eigen::Map<const Vec>(p, S);
    p += S;
    t.a = Eigen::Map<const Vec>(p, A);
    p += A;
    t.r = *p++;
    t.s2 = Eigen::Map<const Vec>(p, S);
    p += S;
    t.terminal = *p != 0.0;
    ds.add(std::move(t));
  }
  // trailing bytes mean the header count lied
  f.peek();
  if (!f.eof())
    throw LoadError(LoadError::Kind::BadFormat,
                    "trailing bytes after " + std::to_string(count) +
                        " records in " + path);
  return ds;
}

}  // namespace momo
