// Builds PathFid blocks and a linearized target for one synthetic question,
// then parses a noisy generation back into a reasoning path.
#include <iostream>

#include "pathfid/pathfid.hpp"

int main() {
  using namespace pathfid;

  SyntheticConfig cfg;
  cfg.num_instances = 1;
  const QuestionInstance q = generate_synthetic(cfg).front();

  std::cout << "question: " << q.question << "\nanswer:   " << q.answer << "\n\n";

  const auto blocks = build_instance_blocks(q, Mode::pathfid);
  std::cout << blocks.size() << " blocks, first:\n  " << blocks.front().text() << "\n\n";

  const ReasoningPath gold = gold_path(q);
  const Tokens target = linearize(gold, PathSchema::full);
  std::cout << "target: " << join(target) << "\n\n";

  // A generation with a clipped title and a stray marker still parses.
  Tokens noisy = target;
  noisy.erase(noisy.begin() + 1);
  noisy.insert(noisy.begin() + 3, "<context-2>");
  ParsedPath parsed = parse(noisy, PathSchema::full);
  ParsedPath fixed = reconstruct_titles(parsed.path, q.titles());
  std::cout << "noisy:  " << join(noisy) << "\n";
  for (const auto& d : parsed.diagnostics) std::cout << "  note: " << d << "\n";
  for (std::size_t k = 0; k < fixed.path.hops.size(); ++k)
    std::cout << "hop " << k + 1 << ": " << fixed.path.hops[k].title << "\n";
  std::cout << "answer: " << fixed.path.answer.value_or("") << "\n";
  return 0;
}
