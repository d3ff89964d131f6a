// Records the scripted provider fixtures for the vacation example and the tree the CLI builds
// from them (new + expand root + expand the preferred child).
//
//   make_fixtures <out_dir>
//
// Writes <out_dir>/vacation_fixtures.json and <out_dir>/vacation_golden.json.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "itot/cli.hpp"

namespace {

using namespace itot;

struct Scripted {
  std::string text;
  int score;
  std::string remark;
  std::vector<double> embedding;
};

const std::vector<Scripted> kDayOne = {
    {"Day 1: Walk through the Gothic Quarter to the cathedral, then have tapas and vermouth in El Born.", 8,
     "A relaxed start that covers the historic centre.", {1, 0, 0, 0, 0, 0, 0, 0.1}},
    {"Day 1: See the Sagrada Fam\xC3\xADlia in the morning (book tickets ahead) and spend the afternoon in Park "
     "G\xC3\xBC" "ell.",
     9, "Covers the two landmarks most visitors want to see and plans around the ticket queue.",
     {0, 1, 0.1, 0, 0, 0, 0, 0}},
    {"Day 1: Start at the Sagrada Fam\xC3\xADlia with pre-booked tickets, then head up to Park G\xC3\xBC" "ell for "
     "the afternoon.",
     8, "Good landmarks and sensible ticket planning.", {0, 0.95, 0.25, 0, 0, 0, 0, 0.05}},
    {"Day 1: Spend the whole day on the beach at Barceloneta.", 4,
     "Pleasant, but one beach day uses a third of a short trip.", {0, 0, 0, 1, 0, 0, 0, 0}},
    {"Day 1: Take a day trip to Montserrat.", 6, "Worthwhile, though it leaves the city itself for later.",
     {0, 0, 0, 0, 1, 0, 0, 0}},
};

const std::vector<Scripted> kDayTwo = {
    {"Day 2: Stroll down La Rambla to the Boqueria market, then visit the Picasso Museum.", 8,
     "Continues naturally from day 1 without repeating it.", {0.2, 0, 0, 0, 0, 1, 0, 0}},
    {"Day 2: Take the cable car up Montju\xC3\xAF" "c and watch the Magic Fountain in the evening.", 7,
     "A new part of the city with a good evening plan.", {0, 0, 0, 0, 0, 0, 1, 0}},
    {"Day 2: Visit Casa Batll\xC3\xB3 and Casa Mil\xC3\xA0 on Passeig de Gr\xC3\xA0" "cia.", 6,
     "Fine, but more Gaud\xC3\xAD right after day 1.", {0, 0.3, 0, 0, 0, 0, 0, 1}},
    {"Day 2: Visit the Sagrada Fam\xC3\xADlia again.", 2, "Repeats the previous step.", {0, 1, 0, 0, 0, 0, 0, 0}},
    {"Day 2: Relax at Barceloneta beach and have paella by the sea.", 7,
     "A well-placed rest day in the middle of the trip.", {0, 0, 0, 1, 0, 0.2, 0, 0}},
};

std::string numbered(const std::vector<Scripted>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += std::to_string(i + 1) + ". " + items[i].text + "\n";
  return out;
}

/// Answers generation and individual evaluation requests from the tables above.
class ScriptChat final : public providers::ChatModel {
 public:
  std::vector<std::string> complete(const providers::CompletionRequest& req) override {
    const auto& user = req.messages.back().content;
    bool second_day = user.find("Step 1: Day 1:") != std::string::npos;
    if (req.call_tag.rfind("generate", 0) == 0) return {numbered(second_day ? kDayTwo : kDayOne)};
    for (const auto& c : second_day ? kDayTwo : kDayOne) {
      if (user.find("Candidate next thought:\n" + c.text + "\n") != std::string::npos) {
        return {c.remark + "\nScore: " + std::to_string(c.score)};
      }
    }
    throw Error(Errc::fixture_miss, "unscripted request " + req.call_tag);
  }
};

/// Fixed vectors for the scripted thoughts; records which ones were asked for.
class TableEmbedder final : public providers::Embedder {
 public:
  std::vector<providers::EmbeddingVector> embed(std::span<const std::string> texts) override {
    std::vector<providers::EmbeddingVector> out;
    for (const auto& t : texts) {
      const Scripted* hit = nullptr;
      for (const auto* table : {&kDayOne, &kDayTwo}) {
        for (const auto& c : *table) {
          if (c.text == t) hit = &c;
        }
      }
      if (hit == nullptr) throw Error(Errc::fixture_miss, "no embedding for " + t);
      used[t] = hit->embedding;
      out.push_back({hit->embedding});
    }
    return out;
  }
  std::map<std::string, std::vector<double>> used;
};

const std::vector<std::string> kNewArgs = {"new",          "--example", "1",         "-k",         "5",
                                           "-b",           "3",         "--selection", "greedy",   "--evaluation",
                                           "individual",   "--grouping", "embedding", "--threshold", "0.8",
                                           "--seed",       "42"};

int run_cli(std::vector<std::string> args, std::string& out) {
  std::ostringstream o, e;
  int rc = cli::run(std::move(args), o, e);
  out = o.str();
  if (rc != 0) std::cerr << e.str();
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <out_dir>\n";
    return 2;
  }
  namespace fs = std::filesystem;
  fs::path out_dir = argv[1];
  fs::create_directories(out_dir);
  auto work = fs::temp_directory_path() / ("itot-fixtures-" + std::to_string(::getpid()));
  fs::remove_all(work);

  // Record: drive the service with the scripted providers.
  auto chat = std::make_shared<providers::RecordingChatModel>(std::make_shared<ScriptChat>());
  auto embedder = std::make_shared<TableEmbedder>();
  service::ServiceConfig cfg;
  cfg.new_tree_id = service::sequential_ids();
  cfg.creation_clock = service::fixed_creation_time;
  auto svc = std::make_shared<service::TreeService>(std::make_shared<store::FileTreeStore>(work / "record"),
                                                    providers::Providers{chat, embedder, nullptr}, cfg);
  cli::Options opts;
  opts.example = 1;
  opts.k = 5;
  opts.b = 3;
  opts.selection = "greedy";
  opts.evaluation = "individual";
  opts.grouping = "embedding";
  opts.threshold = 0.8;
  opts.seed = 42;
  cli::LocalBackend backend(svc);
  auto tree = backend.create(cli::new_request(opts));
  tree = backend.expand(tree.id(), NodeId{0});
  auto second = tree.state().preferred_path.back();
  tree = backend.expand(tree.id(), second);

  providers::Fixtures fixtures;
  fixtures.completions = chat->recorded();
  fixtures.embeddings = embedder->used;
  fixtures.hashing_embedding_fallback = false;
  auto fixture_path = out_dir / "vacation_fixtures.json";
  providers::save_fixtures(fixtures, fixture_path.string());

  // Replay through the command line exactly as the golden check does.
  std::vector<std::string> common = {"--data-dir", (work / "replay").string(), "--fake", fixture_path.string()};
  auto with = [&](std::vector<std::string> rest) {
    auto args = common;
    args.insert(args.end(), rest.begin(), rest.end());
    return args;
  };
  std::string printed;
  if (run_cli(with(kNewArgs), printed) != 0) return 1;
  auto id = std::string(text::trim(printed));
  if (run_cli(with({"expand", id, "n0"}), printed) != 0) return 1;
  std::cout << printed;
  if (run_cli(with({"expand", id, to_string(second)}), printed) != 0) return 1;
  std::cout << printed;
  if (run_cli(with({"show", id, "--json"}), printed) != 0) return 1;
  if (printed != serialize_tree(tree)) {
    std::cerr << "replayed tree differs from the recorded one\n";
    return 1;
  }
  std::ofstream(out_dir / "vacation_golden.json", std::ios::binary) << printed;
  run_cli(with({"show", id}), printed);
  std::cout << printed;
  std::cout << "second expansion at " << to_string(second) << "\n";
  fs::remove_all(work);
  return 0;
}
