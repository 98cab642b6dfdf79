#include <caselaw/cascade.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace caselaw;

namespace {

struct Options {
    std::string preset;
    std::vector<std::string> overrides;
    std::string corpus, queries, candidates, labels, index, out, diagnostics, run;
    std::vector<std::string> embeddings;
    std::string task = "task1";
    bool json = false;
    unsigned threads = 0;
};

PipelineConfig resolve_config(const Options& o, std::string_view fallback_preset) {
    auto config = preset(o.preset.empty() ? fallback_preset : std::string_view(o.preset));
    for (const auto& kv : o.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw Error("--set expects key=value, got '" + kv + "'");
        config.set(std::string_view(kv).substr(0, eq), std::string_view(kv).substr(eq + 1));
        std::cerr << "override " << kv << "\n";
    }
    config.validate();
    return config;
}

std::vector<std::string> config_header(const PipelineConfig& config) {
    std::vector<std::string> lines;
    for (const auto& [k, v] : config.describe()) lines.push_back(k + "=" + v);
    return lines;
}

std::pair<fs::path, fs::path> task1_dirs(const Options& o) {
    fs::path q = o.queries, c = o.candidates;
    if (!o.corpus.empty()) {
        if (q.empty()) q = fs::path(o.corpus) / "queries";
        if (c.empty()) c = fs::path(o.corpus) / "candidates";
    }
    if (q.empty() || c.empty()) throw Error("case retrieval needs --corpus DIR or both --queries and --candidates");
    return {q, c};
}

std::string task1_fingerprint(std::span<const Document> candidates, const PipelineConfig& config) {
    Fnv1a h;
    h.update(params_signature(config.stage1));
    h.update_separator();
    h.update(to_string(config.granularity));
    h.update_separator();
    for (const auto& d : candidates) {
        h.update(d.id);
        h.update_separator();
        h.update(d.raw_text);
        h.update_separator();
    }
    return hex64(h.digest());
}

/// Loads the cached index when its fingerprint matches, otherwise rebuilds and
/// refreshes the cache.
LexicalIndex cached_index(const fs::path& path, std::span<const Document> candidates, const PipelineConfig& config, unsigned threads) {
    auto fingerprint = task1_fingerprint(candidates, config);
    if (fs::exists(path)) {
        auto loaded = deserialize_index(read_file(path));
        if (loaded.fingerprint == fingerprint) return std::move(loaded.index);
        std::cerr << "index " << path.string() << " is stale; rebuilding\n";
    }
    auto index = build_task1_index(candidates, config, threads);
    write_file_atomic(path, serialize_index(index, fingerprint));
    return index;
}

std::unique_ptr<EmbeddingProvider> make_provider(const PipelineConfig& config, const Options& o) {
    switch (config.provider) {
    case ProviderKind::none:
        if (!o.embeddings.empty()) warn("--embeddings ignored: the configuration has no embedding provider");
        return nullptr;
    case ProviderKind::averaged_ngram: {
        if (o.embeddings.size() != 1) throw Error("provider averaged-ngram needs exactly one --embeddings word-vector file");
        auto table = std::make_shared<const WordVectorTable>(load_word_vectors(o.embeddings[0]));
        return std::make_unique<AveragedNgramProvider>(table, config.use_bigrams);
    }
    case ProviderKind::precomputed: {
        if (o.embeddings.size() != 2) throw Error("provider precomputed needs --embeddings QUERY.tsv --embeddings CANDIDATE.tsv");
        auto qs = std::make_shared<const ParagraphEmbeddingStore>(load_paragraph_embeddings(o.embeddings[0]));
        auto cs = std::make_shared<const ParagraphEmbeddingStore>(load_paragraph_embeddings(o.embeddings[1]));
        return std::make_unique<PrecomputedProvider>(qs, cs);
    }
    }
    throw Error("unknown provider");
}

void require(const std::string& value, std::string_view flag) {
    if (value.empty()) throw Error(std::string(flag) + " is required");
}

std::string one_line(std::string s) {
    for (auto& c : s)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return s;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_stats(const Options& o) {
    CorpusStats s;
    if (o.task == "task1") {
        auto [qdir, cdir] = task1_dirs(o);
        auto corpus = load_task1(qdir, cdir, {});
        auto labels = o.labels.empty() ? LabelSet{} : load_labels(o.labels);
        s = compute_stats(corpus.queries, corpus.candidates, labels);
    } else if (o.task == "task2") {
        require(o.corpus, "--corpus");
        auto queries = load_task2(o.corpus);
        auto labels = o.labels.empty() ? LabelSet{} : load_labels(o.labels, {true, false});
        s = compute_stats(queries, labels);
    } else {
        throw Error("--task must be task1 or task2");
    }
    const bool has_labels = !o.labels.empty();
    if (o.json) {
        nlohmann::ordered_json j;
        j["queries"] = s.query_count;
        j["candidates"] = s.candidate_count;
        if (s.avg_candidate_paragraphs_per_query) j["avg_candidate_paragraphs_per_query"] = round4(*s.avg_candidate_paragraphs_per_query);
        if (has_labels) j["avg_relevant"] = round4(s.avg_relevant);
        j["avg_query_words"] = round4(s.avg_query_words);
        j["avg_candidate_words"] = round4(s.avg_candidate_words);
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    std::cout << "# of queries\t" << s.query_count << "\n";
    std::cout << "# of candidate " << (o.task == "task1" ? "cases" : "paragraphs") << "\t" << s.candidate_count << "\n";
    std::cout << "avg # of candidate paragraphs per query\t"
              << (s.avg_candidate_paragraphs_per_query ? format_fixed(*s.avg_candidate_paragraphs_per_query, 3) : "-") << "\n";
    std::cout << "avg # of relevant candidates/paragraphs\t" << (has_labels ? format_fixed(s.avg_relevant, 3) : "-") << "\n";
    std::cout << "avg query length (words)\t" << format_fixed(s.avg_query_words, 2) << "\n";
    std::cout << "avg candidate length (words)\t" << format_fixed(s.avg_candidate_words, 2) << "\n";
    return 0;
}

int cmd_index(const Options& o) {
    auto config = resolve_config(o, "task1-bm25");
    if (config.task != Task::task1) throw Error("index is only defined for case retrieval presets");
    fs::path target = o.index.empty() ? o.out : o.index;
    if (target.empty()) throw Error("--index PATH is required");
    if (o.candidates.empty() && o.corpus.empty()) throw Error("--corpus or --candidates is required");
    fs::path cdir = o.candidates.empty() ? fs::path(o.corpus) / "candidates" : fs::path(o.candidates);
    auto candidates = load_documents(cdir);
    auto fingerprint = task1_fingerprint(candidates, config);
    auto index = build_task1_index(candidates, config, o.threads);
    write_file_atomic(target, serialize_index(index, fingerprint));
    std::cerr << "indexed " << index.docs().size() << " units from " << candidates.size() << " candidates, " << index.vocabulary().size()
              << " terms\n";
    return 0;
}

int cmd_retrieve(const Options& o) {
    auto config = resolve_config(o, "task1-bm25");
    if (config.task != Task::task1) throw Error("retrieve runs case retrieval presets; use entail for '" + std::string(to_string(config.task)) + "'");
    require(o.out, "--out");
    auto [qdir, cdir] = task1_dirs(o);
    auto corpus = load_task1(qdir, cdir, config.context);
    auto provider = make_provider(config, o);

    std::optional<LexicalIndex> index;
    if (!o.index.empty()) index = cached_index(o.index, corpus.candidates, config, o.threads);
    auto result = run_task1_detailed(corpus.queries, corpus.candidates, config, provider.get(), index ? &*index : nullptr, o.threads);
    write_file_atomic(o.out, format_run(result.run, config_header(config)));

    if (!o.diagnostics.empty()) {
        const auto& source = config.provider == ProviderKind::none ? result.stage1 : result.stage2;
        std::string text;
        for (const auto& [qid, scores] : source) text += "# query " + qid + "\n" + format_diagnostics(scores);
        write_file_atomic(o.diagnostics, text);
    }
    if (!o.labels.empty()) {
        auto labels = load_labels(o.labels);
        std::cerr << "stage-1 recall@" << config.reduce_to << " " << format_fixed(recall_at_k(result.stage1, labels, config.reduce_to), 4)
                  << "\n";
    }
    return 0;
}

int cmd_entail(const Options& o) {
    auto config = resolve_config(o, "task2-fragment");
    if (config.task != Task::task2) throw Error("entail runs entailment presets; use retrieve for '" + std::string(to_string(config.task)) + "'");
    require(o.corpus, "--corpus");
    require(o.out, "--out");
    auto queries = load_task2(o.corpus);
    auto run = run_task2(queries, config, o.threads);
    write_file_atomic(o.out, format_run(run, config_header(config)));
    return 0;
}

int cmd_evaluate(const Options& o) {
    require(o.run, "--run");
    require(o.labels, "--labels");
    auto run = parse_run(read_file(o.run));
    bool entailment = false;
    for (const auto& [_, preds] : run.per_query)
        for (const auto& p : preds) entailment = entailment || p.paragraph_index.has_value();
    auto labels = load_labels(o.labels, {true, !entailment});
    auto report = evaluate(run, labels);
    auto json = report_to_json(report).dump(2) + "\n";
    if (!o.out.empty()) write_file_atomic(o.out, json);
    std::cout << json;
    std::cerr << per_query_table(report);
    return 0;
}

int cmd_dump_template(const Options& o) {
    auto config = resolve_config(o, "task1-reduced-sbert");
    if (config.task != Task::task1) throw Error("embedding templates are defined for case retrieval presets");
    require(o.out, "--out");
    auto [qdir, cdir] = task1_dirs(o);
    auto corpus = load_task1(qdir, cdir, config.context);
    const std::string header = "# doc_id\tunit_index\ttext\n";
    std::string qtext = header, ctext = header;
    for (const auto& q : corpus.queries)
        for (const auto& u : query_units(q)) qtext += u.doc_id + "\t" + std::to_string(u.unit_index) + "\t" + one_line(u.text) + "\n";
    for (const auto& c : corpus.candidates)
        for (const auto& u : paragraph_units(c)) ctext += u.doc_id + "\t" + std::to_string(u.unit_index) + "\t" + one_line(u.text) + "\n";
    write_file_atomic(o.out + ".queries.tsv", qtext);
    write_file_atomic(o.out + ".candidates.tsv", ctext);
    return 0;
}

std::string presets_list() {
    std::string s;
    for (auto p : kPresetNames) s += (s.empty() ? "" : ", ") + std::string(p);
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage legal case retrieval and paragraph entailment"};
    app.require_subcommand(1);
    Options o;

    auto threads = [&](CLI::App* c) {
        c->add_option("--threads", o.threads, "Worker cap, 0 = one per hardware thread")->envname("CASELAW_THREADS");
    };
    auto config_flags = [&](CLI::App* c) {
        c->add_option("--preset", o.preset, "Named configuration: " + presets_list());
        c->add_option("--set", o.overrides, "key=value override applied after the preset (repeatable)");
    };
    auto task1_paths = [&](CLI::App* c) {
        c->add_option("--corpus", o.corpus, "Directory holding queries/ and candidates/");
        c->add_option("--queries", o.queries, "Query case directory");
        c->add_option("--candidates", o.candidates, "Candidate case directory");
    };

    auto* stats = app.add_subcommand("stats", "Corpus statistics");
    stats->add_option("--task", o.task, "task1 or task2");
    task1_paths(stats);
    stats->add_option("--labels", o.labels, "Gold label JSON");
    stats->add_flag("--json", o.json, "Print JSON instead of a table");

    auto* index = app.add_subcommand("index", "Build and store the lexical index");
    config_flags(index);
    task1_paths(index);
    index->add_option("--index", o.index, "Index file to write");
    threads(index);

    auto* retrieve = app.add_subcommand("retrieve", "Case retrieval run");
    config_flags(retrieve);
    task1_paths(retrieve);
    retrieve->add_option("--embeddings", o.embeddings, "Word vectors, or query and candidate paragraph TSVs");
    retrieve->add_option("--index", o.index, "Index cache, rebuilt when absent or stale");
    retrieve->add_option("--labels", o.labels, "Gold labels; reports stage-1 recall");
    retrieve->add_option("--out", o.out, "Run file to write");
    retrieve->add_option("--diagnostics", o.diagnostics, "Per-candidate score and argmax pair TSV");
    threads(retrieve);

    auto* entail = app.add_subcommand("entail", "Paragraph entailment run");
    config_flags(entail);
    entail->add_option("--corpus", o.corpus, "Directory of per-query folders");
    entail->add_option("--out", o.out, "Run file to write");
    threads(entail);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a run file");
    evaluate_cmd->add_option("--run", o.run, "Run file");
    evaluate_cmd->add_option("--labels", o.labels, "Gold label JSON");
    evaluate_cmd->add_option("--out", o.out, "Also write the JSON report here");

    auto* dump = app.add_subcommand("dump-embeddings-template", "List the text units that need precomputed vectors");
    config_flags(dump);
    task1_paths(dump);
    dump->add_option("--out", o.out, "Output prefix; writes PREFIX.queries.tsv and PREFIX.candidates.tsv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (stats->parsed()) return cmd_stats(o);
        if (index->parsed()) return cmd_index(o);
        if (retrieve->parsed()) return cmd_retrieve(o);
        if (entail->parsed()) return cmd_entail(o);
        if (evaluate_cmd->parsed()) return cmd_evaluate(o);
        if (dump->parsed()) return cmd_dump_template(o);
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        Fnv1a h;
        h.update(e.what());
        std::cerr << "internal error [ref " << hex64(h.digest()).substr(0, 8) << "]: " << one_line(e.what()) << "\n";
        return 2;
    } catch (...) {
        std::cerr << "internal error [ref unknown]: non-standard exception\n";
        return 2;
    }
}
