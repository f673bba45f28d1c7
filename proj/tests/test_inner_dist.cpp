#include <catch2/catch_amalgamated.hpp>

#include "destim/destim.hpp"
#include "oracles.hpp"

using namespace destim;

namespace {

SymbolBlock block_from(int k, std::vector<std::vector<std::uint32_t>> rows) {
  SymbolBlock sb;
  sb.m = static_cast<int>(rows.size());
  sb.n = static_cast<int>(rows[0].size());
  sb.k = k;
  for (const auto& row : rows) sb.w.insert(sb.w.end(), row.begin(), row.end());
  return sb;
}

SymbolBlock draw_block(int k, int m, int n, std::span<const double> p, Rng& rng) {
  SymbolBlock sb;
  sb.m = m;
  sb.n = n;
  sb.k = k;
  sb.w.resize(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
  std::discrete_distribution<int> dist(p.begin(), p.end());
  for (auto& w : sb.w) w = static_cast<std::uint32_t>(dist(rng));
  return sb;
}

std::vector<double> random_pmf(int k, Rng& rng) {
  std::vector<double> p(static_cast<std::size_t>(k));
  std::exponential_distribution<double> e(1.0);
  double tot = 0.0;
  for (auto& v : p) {
    v = e(rng);
    tot += v;
  }
  for (auto& v : p) v /= tot;
  return p;
}

}  // namespace

TEST_CASE("messages hold exactly l bits in a packed format") {
  Message msg(12);
  msg.set_field(0, 5, 0b10110u);
  msg.set_field(5, 7, 0b0011001u);
  CHECK(msg.field(0, 5) == 0b10110u);
  CHECK(msg.field(5, 7) == 0b0011001u);
  CHECK(msg.bytes.size() == 2);

  Transcript tr;
  tr.m = 1;
  tr.l = 12;
  tr.messages = {msg};
  CHECK(budget_exact(tr));
  tr.messages[0].set_bit(11, 1);
  CHECK(budget_exact(tr));
  // a stray bit past l breaks the budget contract
  tr.messages[0].bytes[1] |= 0x01;
  CHECK(!budget_exact(tr));
}

TEST_CASE("transcript serialization is bit exact") {
  Rng rng = make_rng(101);
  Transcript tr;
  tr.m = 3;
  tr.l = 11;
  for (int i = 0; i < 3; ++i) {
    Message msg(11);
    for (int j = 0; j < 11; ++j) msg.set_bit(j, static_cast<int>(rng() & 1));
    tr.messages.push_back(msg);
  }
  const std::vector<std::uint8_t> bytes = serialize(tr);
  // header: m then l, little endian 32-bit
  CHECK(bytes[0] == 3);
  CHECK(bytes[1] == 0);
  CHECK(bytes[4] == 11);
  CHECK(bytes.size() == 8 + 3 * 2);
  const Transcript back = deserialize_transcript(bytes);
  CHECK(back.m == tr.m);
  CHECK(back.l == tr.l);
  for (int i = 0; i < 3; ++i) CHECK(back.messages[static_cast<std::size_t>(i)].bytes == tr.messages[static_cast<std::size_t>(i)].bytes);
}

TEST_CASE("counting frames reproduce the worked example") {
  // m=2, n=3, k=2, l=4: two 2-bit frames per encoder, two frames per symbol.
  Rng rng = make_rng(0);
  const SymbolBlock sb = block_from(2, {{0, 0, 1}, {1, 1, 1}});
  auto [tr, est] = count_frames_round(sb, 4, rng);
  CHECK(est[0] == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(est[1] == Catch::Approx(2.0 / 3.0).epsilon(1e-14));
  REQUIRE(budget_exact(tr));
  // encoder 0 carries counts (2, 1) -> bits 10 01, encoder 1 counts (0, 3) -> 00 11
  CHECK(tr.messages[0].bytes[0] == 0b10010000u);
  CHECK(tr.messages[1].bytes[0] == 0b00110000u);
}

TEST_CASE("degenerate inputs recover the point mass") {
  Rng rng = make_rng(1);
  SymbolBlock sb;
  sb.m = 6;
  sb.n = 4;
  sb.k = 4;
  sb.w.assign(24, 0u);
  auto [tr, est] = count_frames_round(sb, 9, rng);
  CHECK(est[0] == 1.0);
  for (int w = 1; w < 4; ++w) CHECK(est[static_cast<std::size_t>(w)] == 0.0);

  auto [tr2, est2] = quantized_frames_round(sb, 9, 1, rng);
  CHECK(est2[0] == 1.0);
  for (int w = 1; w < 4; ++w) CHECK(est2[static_cast<std::size_t>(w)] == 0.0);
}

TEST_CASE("budget too small is reported") {
  Rng rng = make_rng(2);
  SymbolBlock sb;
  sb.m = 2;
  sb.n = 3;
  sb.k = 64;
  sb.w.assign(6, 0u);
  CHECK_THROWS_AS(count_frames_round(sb, 4, rng), BudgetTooSmall);  // m l'/k = 0
  CHECK_THROWS_AS(quantized_frames_round(sb, 4, 2, rng), BudgetTooSmall);
}

TEST_CASE("counting frames hit the binomial variance") {
  Rng rng = make_rng(3);
  const int k = 8, m = 64, n = 16, l = 20;
  const std::vector<double> p = random_pmf(k, rng);
  const long long copies = (static_cast<long long>(m) * std::min<long long>(l / bits_for_count(n), k)) / k;
  double closed = 0.0;
  for (double pw : p) closed += pw * (1.0 - pw) / (static_cast<double>(copies) * n);

  const int trials = 10000;
  double mse = 0.0;
  for (int t = 0; t < trials; ++t) {
    const SymbolBlock sb = draw_block(k, m, n, p, rng);
    auto [tr, est] = count_frames_round(sb, l, rng);
    for (int w = 0; w < k; ++w) mse += (est[static_cast<std::size_t>(w)] - p[static_cast<std::size_t>(w)]) * (est[static_cast<std::size_t>(w)] - p[static_cast<std::size_t>(w)]);
  }
  mse /= trials;
  CHECK(mse / closed > 0.8);
  CHECK(mse / closed < 1.2);
}

TEST_CASE("quantized frames with a count-resolving grid equal counting frames") {
  // n = 2^b - 1 makes every frequency representable, so the dither is
  // degenerate and both protocols emit identical frames.
  Rng rng = make_rng(4);
  const int k = 4, m = 8, n = 3, b = 2, l = 8;
  const std::vector<double> p = random_pmf(k, rng);
  const SymbolBlock sb = draw_block(k, m, n, p, rng);
  Rng r1 = make_rng(9), r2 = make_rng(9);
  auto [trq, estq] = quantized_frames_round(sb, l, b, r1);
  auto [trc, estc] = count_frames_round(sb, l, r2);
  for (int w = 0; w < k; ++w)
    CHECK(estq[static_cast<std::size_t>(w)] * n == Catch::Approx(estc[static_cast<std::size_t>(w)] * n).margin(1e-12));
  CHECK(serialize(trq) == serialize(trc));
}

TEST_CASE("quantized frames are unbiased") {
  Rng rng = make_rng(5);
  const int k = 8, m = 32, n = 5, b = 3, l = 9;
  const std::vector<double> p = random_pmf(k, rng);
  const int trials = 10000;
  std::vector<double> acc(static_cast<std::size_t>(k), 0.0), accsq(static_cast<std::size_t>(k), 0.0);
  for (int t = 0; t < trials; ++t) {
    const SymbolBlock sb = draw_block(k, m, n, p, rng);
    auto [tr, est] = quantized_frames_round(sb, l, b, rng);
    for (int w = 0; w < k; ++w) {
      acc[static_cast<std::size_t>(w)] += est[static_cast<std::size_t>(w)];
      accsq[static_cast<std::size_t>(w)] += est[static_cast<std::size_t>(w)] * est[static_cast<std::size_t>(w)];
    }
  }
  for (int w = 0; w < k; ++w) {
    const double mean = acc[static_cast<std::size_t>(w)] / trials;
    const double se = std::sqrt((accsq[static_cast<std::size_t>(w)] - acc[static_cast<std::size_t>(w)] * acc[static_cast<std::size_t>(w)] / trials) / (trials - 1) / trials);
    CHECK(std::abs(mean - p[static_cast<std::size_t>(w)]) <= 4.0 * std::max(se, 1e-12));
  }
}

TEST_CASE("random partition identifies symbols exactly once cells are singletons") {
  Rng rng = make_rng(6);
  const int k = 4, m = 512, l = 3;  // 2^3 = 8 >= 4
  const std::vector<double> p{0.5, 0.5, 0.0, 0.0};
  const int trials = 300;
  std::vector<double> acc(4, 0.0);
  for (int t = 0; t < trials; ++t) {
    const SymbolBlock sb = draw_block(k, m, 2, p, rng);
    auto [tr, est] = random_partition_round(sb, l, rng);
    REQUIRE(budget_exact(tr));
    for (int w = 0; w < k; ++w) acc[static_cast<std::size_t>(w)] += est[static_cast<std::size_t>(w)];
  }
  const double se = std::sqrt(0.25 / (m * trials));
  CHECK(std::abs(acc[0] / trials - 0.5) <= 4.0 * se);
  CHECK(std::abs(acc[1] / trials - 0.5) <= 4.0 * se);
  CHECK(std::abs(acc[2] / trials) <= 4.0 * se);
}

TEST_CASE("random partition stays unbiased with coarse cells") {
  Rng rng = make_rng(7);
  const int k = 16, m = 256, n = 3, l = 2;  // 4 cells of 4 symbols
  const std::vector<double> p = random_pmf(k, rng);
  const int trials = 10000;
  std::vector<double> acc(static_cast<std::size_t>(k), 0.0), accsq(static_cast<std::size_t>(k), 0.0);
  for (int t = 0; t < trials; ++t) {
    const SymbolBlock sb = draw_block(k, m, n, p, rng);
    auto [tr, est] = random_partition_round(sb, l, rng);
    for (int w = 0; w < k; ++w) {
      acc[static_cast<std::size_t>(w)] += est[static_cast<std::size_t>(w)];
      accsq[static_cast<std::size_t>(w)] += est[static_cast<std::size_t>(w)] * est[static_cast<std::size_t>(w)];
    }
  }
  for (int w = 0; w < k; ++w) {
    const double mean = acc[static_cast<std::size_t>(w)] / trials;
    const double se = std::sqrt((accsq[static_cast<std::size_t>(w)] - acc[static_cast<std::size_t>(w)] * acc[static_cast<std::size_t>(w)] / trials) / (trials - 1) / trials);
    CHECK(std::abs(mean - p[static_cast<std::size_t>(w)]) <= 4.0 * std::max(se, 1e-12));
  }
}

TEST_CASE("random partition error decays fast in l while cells are coarse") {
  Rng rng = make_rng(8);
  const int k = 256, m = 2048, n = 1;
  const std::vector<double> p = random_pmf(k, rng);
  auto mse_at = [&](int l) {
    const int trials = 400;
    double mse = 0.0;
    for (int t = 0; t < trials; ++t) {
      const SymbolBlock sb = draw_block(k, m, n, p, rng);
      auto [tr, est] = random_partition_round(sb, l, rng);
      for (int w = 0; w < k; ++w) mse += (est[static_cast<std::size_t>(w)] - p[static_cast<std::size_t>(w)]) * (est[static_cast<std::size_t>(w)] - p[static_cast<std::size_t>(w)]);
    }
    return mse / trials;
  };
  const double m4 = mse_at(4), m5 = mse_at(5), m6 = mse_at(6);
  CHECK(m4 / m5 > 1.3);
  CHECK(m5 / m6 > 1.3);
}

TEST_CASE("idealized oracle") {
  SymbolBlock sb;
  sb.m = 1;
  sb.n = 1;
  sb.k = 4;
  sb.w = {2u};
  const DistEstimate est = idealized_round(sb);
  CHECK(est == DistEstimate{0.0, 0.0, 1.0, 0.0});

  Rng rng = make_rng(9);
  const int k = 8, m = 16, n = 4;
  const std::vector<double> p = random_pmf(k, rng);
  double closed = 0.0;
  for (double pw : p) closed += pw * (1.0 - pw) / (m * n);
  const int trials = 8000;
  double mse = 0.0, mse_sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    const SymbolBlock sb2 = draw_block(k, m, n, p, rng);
    const DistEstimate e = idealized_round(sb2);
    double s = 0.0;
    for (int w = 0; w < k; ++w) s += (e[static_cast<std::size_t>(w)] - p[static_cast<std::size_t>(w)]) * (e[static_cast<std::size_t>(w)] - p[static_cast<std::size_t>(w)]);
    mse += s;
    mse_sq += s * s;
  }
  mse /= trials;
  const double se = std::sqrt((mse_sq / trials - mse * mse) / (trials - 1));
  CHECK(std::abs(mse - closed) <= 4.0 * se);
}

TEST_CASE("case mapping of inner protocols") {
  CHECK(select_protocol(RegimeCase::Case1, 64, 1 << 16, 1, 4).variant ==
        ProtocolVariant::RandomPartition);
  CHECK(select_protocol(RegimeCase::Case2, 32, 256, 16, 8).variant ==
        ProtocolVariant::QuantizedFrames);
  CHECK(select_protocol(RegimeCase::Case2, 32, 256, 16, 8).b_bits == 5);
  CHECK(select_protocol(RegimeCase::Case3, 64, 16, 1 << 20, 24).variant ==
        ProtocolVariant::CountFrames);
  CHECK(select_protocol(RegimeCase::Case3, 64, 16, 1 << 20, 8).variant ==
        ProtocolVariant::QuantizedFrames);
  CHECK(select_protocol(RegimeCase::Case3, 64, 16, 1 << 20, 8).b_bits == 4);
  CHECK(select_protocol(RegimeCase::Case4, 32, 64, 16, 8).variant ==
        ProtocolVariant::QuantizedFrames);
  CHECK(select_protocol(RegimeCase::Case5, 32, 1 << 16, 1, 8).variant ==
        ProtocolVariant::CountFrames);
}

TEST_CASE("identical seeds give identical transcripts and estimates") {
  const int k = 16, m = 24, n = 3, l = 8;
  std::vector<double> p(16, 1.0 / 16.0);
  for (auto variant : {ProtocolVariant::CountFrames, ProtocolVariant::QuantizedFrames,
                       ProtocolVariant::RandomPartition}) {
    Rng sample_rng = make_rng(77);
    const SymbolBlock sb = draw_block(k, m, n, p, sample_rng);
    Rng r1 = make_rng(123), r2 = make_rng(123);
    auto a = run_inner_round({variant, 2}, sb, l, r1);
    auto b = run_inner_round({variant, 2}, sb, l, r2);
    CHECK(serialize(a.first) == serialize(b.first));
    CHECK(a.second == b.second);
  }
}

TEST_CASE("simplex projection for standalone use") {
  DistEstimate e{0.6, -0.2, 0.8};
  project_to_simplex(e);
  double tot = 0.0;
  for (double v : e) {
    CHECK(v >= 0.0);
    tot += v;
  }
  CHECK(tot == Catch::Approx(1.0).margin(1e-12));
}
