#include <doctest.h>

#include <cstdlib>

#include "advms/config.hpp"
#include "advms/error.hpp"
#include "advms/ini.hpp"

using namespace advms;

namespace {

RunConfig parse(const std::string& text, const std::vector<std::string>& overrides = {}) {
  IniDocument doc = IniDocument::parse(text, "test");
  apply_overrides(doc, overrides);
  return RunConfig::from_document(doc);
}

}  // namespace

TEST_CASE("ini parsing") {
  const auto doc = IniDocument::parse("# comment\n[a]\nx = 1 # trailing\n\n[b]\ny=two words\n[a]\nx=3\n");
  REQUIRE(doc.sections().size() == 3);
  CHECK(doc.find("a")->find("x")->value == "1");
  CHECK(doc.find("b")->find("y")->value == "two words");
  CHECK(doc.find_all("a").size() == 2);
  CHECK(IniDocument::parse(doc.to_string()).to_string() == doc.to_string());

  CHECK_THROWS_AS(IniDocument::parse("x = 1\n"), ConfigError);
  CHECK_THROWS_AS(IniDocument::parse("[a\n"), ConfigError);
  CHECK_THROWS_AS(IniDocument::parse("[a]\nnovalue\n"), ConfigError);
  CHECK_THROWS_AS(IniDocument::parse("[a]\n= 3\n"), ConfigError);
}

TEST_CASE("value parsing") {
  CHECK(parse_real("8/255", "e") == 8.0 / 255.0);
  CHECK(parse_real("0.3", "e") == 0.3);
  CHECK(parse_real("1e-3", "e") == 1e-3);
  CHECK_THROWS_AS(parse_real("1/0", "e"), ConfigError);
  CHECK_THROWS_AS(parse_real("abc", "e"), ConfigError);
  CHECK_THROWS_AS(parse_real("0.3x", "e"), ConfigError);
  CHECK(parse_u64("18446744073709551615", "s") == 18446744073709551615ull);
  CHECK_THROWS_AS(parse_u64("-1", "s"), ConfigError);
  CHECK_THROWS_AS(parse_u64("18446744073709551616", "s"), ConfigError);
  CHECK(parse_bool("true", "b"));
  CHECK_FALSE(parse_bool("0", "b"));
  CHECK_THROWS_AS(parse_bool("maybe", "b"), ConfigError);
  CHECK(split_list(" 1, 2 ,3 ") == std::vector<std::string>{"1", "2", "3"});
  for (double v : {0.1, 8.0 / 255.0, 1.0 / 3.0, 1e-300, 123456.789}) CHECK(parse_real(format_double(v), "v") == v);
}

TEST_CASE("defaults") {
  const RunConfig c = parse("");
  CHECK(c.dataset.id == DatasetId::synthetic);
  CHECK(c.pool.m == 2);
  CHECK(c.pool.epsilon_train == 0.0);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.batch_size == 64);
  CHECK(c.train.learning_rate == 0.01);
  CHECK(c.train.momentum == 0.9);
  CHECK(c.train.inner_steps == 7);
  REQUIRE(c.attacks.size() == 1);
  CHECK(c.attacks[0].kind == AttackKind::pgd);
  CHECK(c.attacks[0].steps == 40);
  CHECK(c.attacks[0].random_start);
  CHECK(c.sweep.m_values == std::vector<std::size_t>{1, 2, 4});
  CHECK(c.output.plots);
  CHECK(c.cache_dir() == c.output.dir / "cache");
  CHECK(c.sweep_seeds() == std::vector<std::uint64_t>{c.pool.master_seed});
}

TEST_CASE("seeds derive from the run seed unless given") {
  const RunConfig a = parse("[run]\nseed = 1\n"), b = parse("[run]\nseed = 2\n");
  CHECK(a.pool.master_seed != b.pool.master_seed);
  CHECK(a.dataset.seed != b.dataset.seed);
  CHECK(a.attacks[0].seed != b.attacks[0].seed);
  CHECK(a.eval.seed != b.eval.seed);
  CHECK(parse("[run]\nseed = 1\n[pool]\nmaster_seed = 5\n").pool.master_seed == 5);
  CHECK(parse("[run]\nseed = 1\n").pool.master_seed == a.pool.master_seed);
  const RunConfig two = parse("[attack]\nkind = fgsm\n[attack]\nkind = fgsm\n");
  CHECK(two.attacks[0].seed != two.attacks[1].seed);
}

TEST_CASE("attack sections") {
  const RunConfig c = parse(
      "[attack]\nkind = fgsm\nepsilon = 8/255\n"
      "[attack]\nkind = cw_pgd\nepsilon = 0.3\nsteps = 10\nthreat = eot\n");
  REQUIRE(c.attacks.size() == 2);
  CHECK(c.attacks[0].steps == 1);
  CHECK(c.attacks[0].step_size == 8.0 / 255.0);
  CHECK_FALSE(c.attacks[0].random_start);
  CHECK(c.attacks[1].step_size == doctest::Approx(0.075));
  CHECK(c.attacks[1].eot_samples == 10);
  CHECK(c.attacks[1].kappa == 0.0);

  const RunConfig o = parse("[attack]\nkind = fgsm\n[attack]\nkind = pgd\n", {"attack.epsilon=0.2"});
  CHECK(o.attacks[0].epsilon == 0.2);
  CHECK(o.attacks[1].epsilon == 0.2);

  CHECK_THROWS_AS(parse("[attack]\nkind = fgsm\nsteps = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[attack]\nkind = pgd\nsteps = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[attack]\nkind = magic\n"), ConfigError);
}

TEST_CASE("unknown keys and sections are rejected") {
  CHECK_THROWS_AS(parse("[pool]\nMM = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[pools]\nM = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[train]\nepoch = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[attack]\nepsilom = 0.1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[pool]\nM = 1\n[pool]\nM = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[dataset]\nid = imagenet\n"), ConfigError);
  CHECK_THROWS_AS(parse("[train]\nmomentum = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse("[sweep]\nM = 0, 1\n"), ConfigError);
  CHECK_NOTHROW(parse("[artifacts]\nanything = goes\n[command]\nname = eval\n"));
}

TEST_CASE("overrides") {
  const RunConfig c = parse("[pool]\nM = 3\n", {"pool.M=5", "train.epochs = 1", "sweep.epsilon_train=0, 8/255"});
  CHECK(c.pool.m == 5);
  CHECK(c.train.epochs == 1);
  CHECK(c.sweep.epsilon_train == std::vector<double>{0.0, 8.0 / 255.0});
  CHECK_THROWS_AS(parse("", {"poolM=3"}), ConfigError);
  CHECK_THROWS_AS(parse("", {"pool.M"}), ConfigError);
  CHECK_THROWS_AS(parse("", {"pool.bogus=1"}), ConfigError);
}

TEST_CASE("effective config round trip") {
  const RunConfig c = parse(
      "[run]\nseed = 9\n[dataset]\nid = mnist\ntrain_count = 2000\n[pool]\nM = 4\nepsilon_train = 0.3\n"
      "[attack]\nkind = pgd\nepsilon = 8/255\n[attack]\nkind = cw_pgd\nthreat = eot\n[sweep]\nmaster_seeds = 1, 2, 3\n");
  const std::string text = c.to_document().to_string();
  const RunConfig back = RunConfig::from_document(IniDocument::parse(text));
  CHECK(back.to_document().to_string() == text);
  CHECK(back.attacks == c.attacks);
  CHECK(back.pool.master_seed == c.pool.master_seed);
  CHECK(back.dataset.path == c.dataset.path);
  CHECK(back.train.fingerprint() == c.train.fingerprint());
}

TEST_CASE("data directory default") {
  ::setenv("ADVMS_DATA_DIR", "/some/where", 1);
  CHECK(parse("[dataset]\nid = mnist\n").dataset.path == std::filesystem::path("/some/where/mnist"));
  CHECK(parse("[dataset]\nid = mnist\npath = /x\n").dataset.path == std::filesystem::path("/x"));
  ::unsetenv("ADVMS_DATA_DIR");
  CHECK(parse("[dataset]\nid = cifar10\n").dataset.path == std::filesystem::path("data/cifar10"));
}

TEST_CASE("load_data") {
  RunConfig c = parse("[dataset]\nsynthetic_classes = 3\nsynthetic_train_per_class = 10\ntest_count = 7\n");
  const DataSplits d = load_data(c.dataset);
  CHECK(d.train.size() == 30);
  CHECK(d.test.size() == 7);
  CHECK(d.train.num_classes == 3);
  CHECK(architecture_for(c.dataset).num_classes() == 3);
  CHECK(load_data(c.dataset).test.ids == d.test.ids);
  c.dataset.id = DatasetId::mnist;
  c.dataset.path = "/definitely/missing";
  CHECK_THROWS_AS(load_data(c.dataset), IoError);
}
