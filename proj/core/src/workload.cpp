#include "focus/workload.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace focus {

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInsert: return "insert";
    case OpKind::kReadFull: return "readF";
    case OpKind::kReadPartial: return "readP";
    case OpKind::kUpdate: return "update";
    case OpKind::kScanFull: return "scanF";
    case OpKind::kScanPartial: return "scanP";
    case OpKind::kReadModifyWrite: return "rmw";
  }
  return "?";
}

Status validate(const WorkloadSpec& spec) {
  double sum = 0;
  for (double p : spec.mix) {
    if (p < 0) return Status(ErrorCode::kInvalidMix, "negative share in " + spec.name);
    sum += p;
  }
  if (std::fabs(sum - 100.0) > 1e-9) return Status(ErrorCode::kInvalidMix, spec.name + " mix sums to " + std::to_string(sum));
  if (spec.record_count == 0) return Status(ErrorCode::kInvalidArgument, "record_count must be positive");
  if (spec.field_count == 0 || spec.field_size == 0) return Status(ErrorCode::kInvalidArgument, "empty records");
  if (spec.partial_field_count == 0 || spec.partial_field_count > spec.field_count) {
    return Status(ErrorCode::kInvalidArgument, "partial_field_count out of range");
  }
  if (spec.zipf_theta <= 0 || spec.zipf_theta == 1.0) return Status(ErrorCode::kInvalidArgument, "zipf theta");
  return Status::OK();
}

Result<WorkloadSpec> workload_by_name(const std::string& name) {
  WorkloadSpec spec;
  spec.name = name;
  auto set = [&spec](OpKind k, double pct) { spec.mix[static_cast<std::size_t>(k)] = pct; };
  if (name == "A") {
    set(OpKind::kUpdate, 50);
    set(OpKind::kReadFull, 50);
  } else if (name == "B") {
    set(OpKind::kUpdate, 5);
    set(OpKind::kReadFull, 95);
  } else if (name == "C") {
    set(OpKind::kReadFull, 100);
  } else if (name == "D") {
    set(OpKind::kInsert, 5);
    set(OpKind::kReadFull, 95);
    spec.distribution = KeyDistribution::kLatest;
  } else if (name == "E") {
    set(OpKind::kInsert, 5);
    set(OpKind::kScanFull, 95);
  } else if (name == "F") {
    set(OpKind::kReadModifyWrite, 50);
    set(OpKind::kReadFull, 50);
  } else if (name.rfind("micro:", 0) == 0) {
    const std::string op = name.substr(6);
    static constexpr std::array<OpKind, 6> kMicro = {OpKind::kInsert, OpKind::kReadFull, OpKind::kReadPartial,
                                                     OpKind::kUpdate, OpKind::kScanFull, OpKind::kScanPartial};
    bool found = false;
    for (OpKind k : kMicro) {
      if (op == op_kind_name(k)) {
        set(k, 100);
        found = true;
      }
    }
    if (!found) return Status(ErrorCode::kInvalidMix, "unknown micro op " + op);
  } else {
    return Status(ErrorCode::kInvalidMix, "unknown workload " + name);
  }
  return spec;
}

// ---------------------------------------------------------------------------------------------

namespace {
double zeta_range(std::uint64_t from, std::uint64_t to, double theta) {
  double sum = 0;
  for (std::uint64_t i = from; i < to; ++i) sum += 1.0 / std::pow(static_cast<double>(i + 1), theta);
  return sum;
}
}  // namespace

ZipfGenerator::ZipfGenerator(std::uint64_t n, double theta) : theta_(theta), zeta2_(zeta_range(0, 2, theta)) {
  grow(n);
}

void ZipfGenerator::grow(std::uint64_t n) {
  if (n <= n_) return;
  zetan_ += zeta_range(n_, n, theta_);
  n_ = n;
  refresh();
}

void ZipfGenerator::refresh() {
  alpha_ = 1.0 / (1.0 - theta_);
  eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n_), 1.0 - theta_)) / (1.0 - zeta2_ / zetan_);
}

// Rejection-free inversion from Gray et al.'s synthetic database generator, as used by YCSB.
std::uint64_t ZipfGenerator::next(std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double uz = u * zetan_;
  if (uz < 1.0) return 0;
  if (uz < 1.0 + std::pow(0.5, theta_)) return n_ > 1 ? 1 : 0;
  const auto r = static_cast<std::uint64_t>(static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
  return r >= n_ ? n_ - 1 : r;
}

// ---------------------------------------------------------------------------------------------

OpGenerator::OpGenerator(const WorkloadSpec& spec, std::uint64_t seed)
    : spec_(spec),
      rng_(seed),
      kind_(spec.mix.begin(), spec.mix.end()),
      zipf_(spec.record_count, spec.zipf_theta),
      next_insert_(spec.record_count) {
  // Hot ranks are spread over the keyspace with a fixed odd stride so neighbours in key order
  // are not all hot.
  stride_ = 0x9E3779B97F4A7C15ull % spec.record_count;
  while (std::gcd(stride_, spec.record_count) != 1) ++stride_;
}

std::uint64_t OpGenerator::scatter(std::uint64_t rank) const {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rank) * stride_) % spec_.record_count);
}

std::uint64_t OpGenerator::pick_key() {
  switch (spec_.distribution) {
    case KeyDistribution::kUniform:
      return std::uniform_int_distribution<std::uint64_t>(0, next_insert_ - 1)(rng_);
    case KeyDistribution::kLatest:
      zipf_.grow(next_insert_);
      return next_insert_ - 1 - zipf_.next(rng_);
    case KeyDistribution::kZipfian:
      break;
  }
  return scatter(zipf_.next(rng_));
}

Op OpGenerator::next() {
  Op op;
  op.kind = static_cast<OpKind>(kind_(rng_));
  if (op.kind == OpKind::kInsert) {
    op.key = next_insert_++;
    return op;
  }
  op.key = pick_key();
  op.first_field = std::uniform_int_distribution<std::uint32_t>(0, spec_.field_count - 1)(rng_);
  if (op.kind == OpKind::kScanFull || op.kind == OpKind::kScanPartial) op.scan_len = spec_.scan_width;
  return op;
}

std::vector<Op> generate(const WorkloadSpec& spec, std::uint64_t seed) {
  OpGenerator gen(spec, seed);
  std::vector<Op> ops;
  ops.reserve(spec.op_count);
  for (std::uint64_t i = 0; i < spec.op_count; ++i) ops.push_back(gen.next());
  return ops;
}

std::string record_key(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "user%012llu", static_cast<unsigned long long>(index));
  return buf;
}

std::string field_name(std::uint32_t field) { return "field" + std::to_string(field); }

std::string field_value(std::uint64_t key, std::uint32_t field, std::uint32_t size, std::uint64_t salt) {
  std::string out(size, '\0');
  std::uint64_t x = (key * 0x9E3779B97F4A7C15ull) ^ (static_cast<std::uint64_t>(field) << 48) ^ (salt * 0xBF58476D1CE4E5B9ull);
  for (std::uint32_t i = 0; i < size; ++i) {
    // splitmix64 step per 8 bytes
    if (i % 8 == 0) {
      x += 0x9E3779B97F4A7C15ull;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      x = z ^ (z >> 31);
    }
    out[i] = static_cast<char>('!' + ((x >> ((i % 8) * 8)) & 0xFF) % 94);
  }
  return out;
}

}  // namespace focus
