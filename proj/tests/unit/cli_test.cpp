#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "itot/cli.hpp"
#include "support/expect.hpp"
#include "support/fake_chat.hpp"

namespace itot::cli {
namespace {

namespace fs = std::filesystem;

const std::string kFixtures = std::string(ITOT_TEST_DATA_DIR) + "/vacation_fixtures.json";
const std::string kGolden = std::string(ITOT_TEST_DATA_DIR) + "/vacation_golden.json";

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    static std::atomic<int> counter{0};
    dir_ = fs::temp_directory_path() / ("itot-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run_with(std::vector<std::string> prefix, std::vector<std::string> args) {
    prefix.insert(prefix.end(), args.begin(), args.end());
    std::ostringstream out, err;
    int code = run(prefix, out, err);
    return {code, out.str(), err.str()};
  }

  Result itot(std::vector<std::string> args) {
    return run_with({"--data-dir", (dir_ / "data").string(), "--fake", kFixtures}, std::move(args));
  }

  static std::vector<std::string> golden_new() {
    return {"new",          "--example",  "1",         "-k",          "5",   "-b",     "3",  "--selection", "greedy",
            "--evaluation", "individual", "--grouping", "embedding", "--threshold", "0.8", "--seed", "42"};
  }

  fs::path dir_;
};

TEST_F(CliTest, NewThenShowRootOnly) {
  fs::create_directories(dir_);
  std::ofstream(dir_ / "eval.txt") << "Steps that take a global approach should be valued more highly.\n";
  auto created = itot({"new", "--main", "Prove that if a graph is not connected then its complement is connected.",
                       "--eval-file", (dir_ / "eval.txt").string()});
  ASSERT_EQ(created.code, 0) << created.err;
  EXPECT_EQ(created.out, "t0001\n");

  auto shown = itot({"show", "t0001"});
  ASSERT_EQ(shown.code, 0) << shown.err;
  EXPECT_EQ(shown.out, "*> n0  Prove that if a graph is not connected then its complement is connected.\n");

  auto doc = nlohmann::json::parse(itot({"show", "t0001", "--json"}).out);
  EXPECT_EQ(doc["prompts"]["evaluation_prompt"], "Steps that take a global approach should be valued more highly.");
  EXPECT_EQ(doc["created_at"], "2024-07-09T00:00:00.000Z");
  EXPECT_EQ(itot({"new", "--main", "again"}).out, "t0002\n");
}

TEST_F(CliTest, GoldenVacationRun) {
  ASSERT_EQ(itot(golden_new()).out, "t0001\n");
  auto first = itot({"expand", "t0001", "root"});
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_NE(first.out.find("g0 x2"), std::string::npos);
  EXPECT_NE(first.out.find("consistency 0.50"), std::string::npos);
  auto second = itot({"expand", "t0001", "n1"});
  ASSERT_EQ(second.code, 0) << second.err;
  EXPECT_EQ(itot({"show", "t0001", "--json"}).out, slurp(kGolden));

  // The printed layer is deterministic.
  fs::remove_all(dir_ / "data");
  itot(golden_new());
  EXPECT_EQ(itot({"expand", "t0001", "n0"}).out, first.out);
}

TEST_F(CliTest, ShowMarksPaths) {
  itot(golden_new());
  itot({"expand", "t0001", "n0"});
  auto out = itot({"show", "t0001"}).out;
  auto lines = text::split_lines(out);
  ASSERT_GE(lines.size(), 4u);
  EXPECT_TRUE(text::trim(lines[0]).substr(0, 2) == "*>");
  EXPECT_EQ(lines[1].substr(0, 6), "  *  n");  // preferred but not active
  EXPECT_EQ(lines[2].substr(0, 6), "     n");
}

TEST_F(CliTest, AddUserThought) {
  itot(golden_new());
  itot({"expand", "t0001", "n0"});
  // The fixtures hold no answers for a user-thought path, so the run fails cleanly.
  auto added = itot({"add", "t0001", "n0", "--text", "Day 1: Cycle along the seafront."});
  EXPECT_EQ(added.code, 1);
  EXPECT_NE(added.err.find("error: fixture-miss"), std::string::npos) << added.err;
  EXPECT_EQ(itot({"show", "t0001", "--json"}).out.find("Cycle along"), std::string::npos);
}

TEST_F(CliTest, ErrorsPrintTheirCode) {
  itot(golden_new());
  auto unknown = itot({"expand", "t0001", "n42"});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_EQ(unknown.err.rfind("error: unknown-node", 0), 0u) << unknown.err;
  EXPECT_EQ(itot({"show", "t0404"}).err.rfind("error: not-found", 0), 0u);
  EXPECT_EQ(itot({"new", "--main", " "}).err.rfind("error: empty-main-prompt", 0), 0u);
  EXPECT_EQ(itot({"new", "--main", "x", "-k", "2", "-b", "3"}).err.rfind("error: invalid-settings", 0), 0u);

  auto missing = run_with({"--data-dir", (dir_ / "d").string(), "--fake", (dir_ / "none.json").string()},
                          {"show", "t0001"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_EQ(missing.err.rfind("error: config-invalid", 0), 0u);
  EXPECT_NE(itot({"frobnicate"}).code, 0);
  EXPECT_NE(itot({}).code, 0);
}

TEST_F(CliTest, ExamplesList) {
  auto r = itot({"examples"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(text::split_lines(r.out).size(), 5u);  // four lines plus the trailing empty piece
  EXPECT_EQ(r.out.rfind("1. Vacation planning", 0), 0u);
  auto j = nlohmann::json::parse(itot({"examples", "--json"}).out);
  ASSERT_EQ(j.size(), 4u);
  for (const auto& e : j) {
    EXPECT_FALSE(e["main_prompt"].get<std::string>().empty());
    EXPECT_FALSE(e["example_prompt"].get<std::string>().empty());
    EXPECT_FALSE(e["evaluation_prompt"].get<std::string>().empty());
  }
}

TEST_F(CliTest, RemoteModeMatchesLocal) {
  Options o;
  o.data_dir = (dir_ / "server").string();
  o.fake = kFixtures;
  api::ServerConfig sc;
  sc.port = 0;
  api::ApiServer server(make_service(o, null_log()), sc, null_log());
  int port = server.start();
  std::vector<std::string> remote = {"--remote", "http://127.0.0.1:" + std::to_string(port)};

  auto created = run_with(remote, golden_new());
  ASSERT_EQ(created.code, 0) << created.err;
  EXPECT_EQ(created.out, "t0001\n");
  auto first = run_with(remote, {"expand", "t0001", "n0"});
  ASSERT_EQ(first.code, 0) << first.err;
  ASSERT_EQ(run_with(remote, {"expand", "t0001", "n1"}).code, 0);
  EXPECT_EQ(run_with(remote, {"show", "t0001", "--json"}).out, slurp(kGolden));

  auto conflict = run_with(remote, {"expand", "t0001", "n1"});
  EXPECT_EQ(conflict.code, 1);
  EXPECT_EQ(conflict.err.rfind("error: parent-already-expanded", 0), 0u) << conflict.err;
  server.stop();
}

TEST_F(CliTest, AddUserThoughtThroughServer) {
  auto chat = std::make_shared<testing::LambdaChat>([](const providers::CompletionRequest& req) {
    if (testing::starts_with(req.call_tag, "generate")) {
      return std::vector<std::string>{"1. Pack light\n2. Book the museum\n3. Rent a bike\n"};
    }
    return std::vector<std::string>{"Score: " + std::to_string(1 + testing::candidate_of(req).size() % 10)};
  });
  service::ServiceConfig cfg;
  cfg.new_tree_id = service::sequential_ids();
  auto svc = std::make_shared<service::TreeService>(
      std::make_shared<store::FileTreeStore>(dir_ / "server", null_log()),
      providers::Providers{chat, std::make_shared<providers::HashingEmbedder>(), nullptr}, cfg);
  api::ServerConfig sc;
  sc.port = 0;
  api::ApiServer server(svc, sc, null_log());
  std::vector<std::string> remote = {"--remote", "http://127.0.0.1:" + std::to_string(server.start())};

  ASSERT_EQ(run_with(remote, {"new", "--main", "Plan a day in Lyon", "-k", "3", "-b", "2", "--evaluation",
                              "individual"}).out,
            "t0001\n");
  ASSERT_EQ(run_with(remote, {"expand", "t0001", "n0"}).code, 0);
  auto added = run_with(remote, {"add", "t0001", "n0", "--text", "Walk along the Saone"});
  ASSERT_EQ(added.code, 0) << added.err;
  auto lines = text::split_lines(added.out);
  EXPECT_NE(lines[0].find("(user)  Walk along the Saone"), std::string::npos) << added.out;
  EXPECT_EQ(lines[0][1], '>');
  auto tree = svc->get("t0001");
  EXPECT_EQ(tree.node(NodeId{0}).children.size(), 3u);
  EXPECT_EQ(tree.state().active_path.size(), 2u);
  server.stop();
}

}  // namespace
}  // namespace itot::cli
