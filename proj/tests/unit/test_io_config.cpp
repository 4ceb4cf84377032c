#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "sct/config.hpp"
#include "sct/errors.hpp"
#include "sct/io.hpp"

using namespace sct;
namespace st = sct::testing;
using sct::testing::TempFile;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const IoError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(EnsembleFile, RoundTrip) {
  const auto& e = st::small_field().train;
  TempFile f(".scte");
  io::write_ensemble(f.path(), e);
  const Ensemble back = io::read_ensemble(f.path());
  EXPECT_EQ(back.Y, e.Y);
  ASSERT_EQ(back.locs.size(), e.locs.size());
  EXPECT_EQ(back.locs.metric(), e.locs.metric());
  for (std::size_t i = 0; i < e.locs.size(); ++i) {
    EXPECT_EQ(back.locs.coords()[i].x, e.locs.coords()[i].x);
    EXPECT_EQ(back.locs.coords()[i].y, e.locs.coords()[i].y);
  }
}

TEST(EnsembleFile, RejectsNewerVersion) {
  TempFile f(".scte");
  io::write_ensemble(f.path(), st::small_field().train);
  std::string bytes = slurp(f.path());
  bytes[4] = 99;
  spit(f.path(), bytes);
  const std::string msg = error_text([&] { io::read_ensemble(f.path()); });
  EXPECT_NE(msg.find("version 99"), std::string::npos) << msg;
}

TEST(EnsembleFile, TruncationReportsOffset) {
  TempFile f(".scte");
  io::write_ensemble(f.path(), st::small_field().train);
  std::string bytes = slurp(f.path());
  bytes.resize(bytes.size() - 8);
  spit(f.path(), bytes);
  const std::string msg = error_text([&] { io::read_ensemble(f.path()); });
  EXPECT_NE(msg.find("offset"), std::string::npos) << msg;
}

TEST(EnsembleFile, BadMagicAndMissingFile) {
  TempFile f(".scte");
  spit(f.path(), "NOPE0000");
  EXPECT_THROW(io::read_ensemble(f.path()), IoError);
  EXPECT_THROW(io::read_ensemble(f.path() + ".absent"), IoError);
}

TEST(ModelFile, RoundTripScoresIdentically) {
  const auto& m = st::small_model();
  const auto& test = st::small_field().test.Y;
  TempFile f(".sctm");
  io::write_model(f.path(), m);
  const FittedModel back = io::read_model(f.path());
  EXPECT_EQ(back.fingerprint(), m.fingerprint());
  const auto a = log_score(m, test), b = log_score(back, test);
  for (std::size_t r = 0; r < a.log_density.size(); ++r) {
    EXPECT_NEAR(a.log_density[r], b.log_density[r], 1e-12 * std::abs(a.log_density[r]));
  }
  EXPECT_EQ(sample(m, 3, 5), sample(back, 3, 5));
}

TEST(NoiseFile, RoundTrip) {
  const Eigen::MatrixXd z = draw_noise(3, 11, 2);
  TempFile f(".sctn");
  io::write_noise(f.path(), z);
  EXPECT_EQ(io::read_noise(f.path()), z);
}

TEST(Csv, ToyIngest) {
  TempFile f(".csv");
  spit(f.path(), "lon,lat,r1,r2\n0,10,1.5,2.5\n1,10,3,4\n");
  const Ensemble e = io::ingest_csv(f.path());
  EXPECT_EQ(e.locations(), 2u);
  EXPECT_EQ(e.replicates(), 2u);
  EXPECT_EQ(e.Y(0, 0), 1.5);
  EXPECT_EQ(e.Y(1, 0), 2.5);
  EXPECT_EQ(e.Y(0, 1), 3.0);
  EXPECT_EQ(e.locs.coords()[1].x, 1.0);
}

TEST(Csv, MissingValueNamesTheCell) {
  TempFile f(".csv");
  spit(f.path(), "lon,lat,r1\n0,10,1\n5,20,NaN\n");
  try {
    io::ingest_csv(f.path());
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("lon 5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lat 20"), std::string::npos) << msg;
  }
}

TEST(Csv, CollapsesRepeatedPoles) {
  TempFile f(".csv");
  spit(f.path(), "lon,lat,r1\n0,90,1\n90,90,1\n0,0,2\n0,-90,3\n180,-90,3\n");
  EXPECT_EQ(io::ingest_csv(f.path()).locations(), 3u);
  io::CsvOptions keep;
  keep.collapse_poles = false;
  EXPECT_THROW(io::ingest_csv(f.path(), keep), DomainError);
}

TEST(Config, RenderParseRoundTrip) {
  ModelConfig c;
  c.family = marginal::FamilyKind::gaussian;
  c.use_h = false;
  c.D = 12;
  c.M = 33;
  c.epsilon = 0.005;
  c.optimizer.algorithm = opt::Algorithm::first_order_adaptive;
  c.optimizer.learning_rate = 0.125;
  const std::string text = render_config(c);
  EXPECT_EQ(render_config(parse_config(text)), text);
  EXPECT_EQ(render_config(parse_config("")), render_config(ModelConfig{}));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config("bogus = 1\n"), DomainError);
  EXPECT_THROW(parse_config("M = -3\n"), DomainError);
  EXPECT_THROW(parse_config("family = gev\n"), DomainError);
  EXPECT_NO_THROW(parse_config("# comment only\n\n"));
}

TEST(Config, ExplainListsEveryKey) {
  const std::string text = render_config(ModelConfig{});
  const std::string explained = explain_config(ModelConfig{});
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    const std::string line = text.substr(pos, eol - pos);
    pos = eol == std::string::npos ? text.size() : eol + 1;
    const std::size_t eq = line.find('=');
    if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(' ') + 1);
    EXPECT_NE(explained.find(key), std::string::npos) << key;
  }
}
