#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sfa/train.hpp"

namespace sfa {

// Locale-independent 6-significant-digit rendering used by every emitter,
// so CSV and JSON lines carry identical numbers.
std::string format_g6(double v);

// CSV columns are fixed: `step,loss,lr` and `epoch,top1,top5,wall_seconds`.
// The JSON-lines mirrors use the same field names, one object per row.
void write_step_csv(const std::string& path, const std::vector<StepRecord>& steps);
void write_eval_csv(const std::string& path, const std::vector<EvalRecord>& evals);
void write_step_jsonl(const std::string& path, const std::vector<StepRecord>& steps);
void write_eval_jsonl(const std::string& path, const std::vector<EvalRecord>& evals);

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::string& path);

uint64_t fnv1a64(std::string_view bytes);

// Plain-text run record: config hash, seed, then one `artifact = path` line
// per produced file.
void write_manifest(const std::string& path, uint64_t config_hash, uint64_t seed,
                    const std::vector<std::string>& artifacts);

}  // namespace sfa
