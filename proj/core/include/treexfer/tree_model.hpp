#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace treexfer {

// Reference from a split node to one of its children, by id.
struct ChildRef {
    bool is_leaf = true;
    int id = 0;

    static ChildRef node(int id) { return {false, id}; }
    static ChildRef leaf(int id) { return {true, id}; }

    friend bool operator==(const ChildRef&, const ChildRef&) = default;
};

// Axis-parallel split: go left iff x[feature] <= threshold.
struct SplitNode {
    int id = 0;
    int feature = 0;
    double threshold = 0.0;
    ChildRef left;
    ChildRef right;

    friend bool operator==(const SplitNode&, const SplitNode&) = default;
};

struct LeafNode {
    int id = 0;
    std::vector<double> value;

    friend bool operator==(const LeafNode&, const LeafNode&) = default;
};

// A full binary tree as imported from an external library. Node/leaf ids are
// arbitrary but unique; the root is the single node that is nobody's child
// (or the single leaf when the tree has no splits).
struct TreeStructure {
    std::vector<SplitNode> nodes;
    std::vector<LeafNode> leaves;

    int num_nodes() const { return static_cast<int>(nodes.size()); }
    int num_leaves() const { return static_cast<int>(leaves.size()); }

    friend bool operator==(const TreeStructure&, const TreeStructure&) = default;
};

enum class Objective { binary, multiclass };

std::string to_string(Objective objective);

struct CanonicalTreeModel {
    std::vector<TreeStructure> trees;
    int num_class = 1;
    Objective objective = Objective::binary;
    int feature_count = 1;

    friend bool operator==(const CanonicalTreeModel&, const CanonicalTreeModel&) = default;
};

// Position-based view of a tree: children refer to indices into
// TreeStructure::nodes / TreeStructure::leaves rather than to ids.
struct TreeTopology {
    struct Child {
        bool is_leaf = true;
        int index = 0;

        friend bool operator==(const Child&, const Child&) = default;
    };

    Child root;
    std::vector<Child> left;
    std::vector<Child> right;

    int num_nodes() const { return static_cast<int>(left.size()); }
    int num_leaves() const { return num_nodes() + 1; }

    friend bool operator==(const TreeTopology&, const TreeTopology&) = default;
};

// Resolves ids to positions and checks the full-binary-tree invariants:
// unique ids, every child reference resolves, every node and leaf is
// referenced exactly once (root excepted), no cycles, leaves = nodes + 1.
// Throws InputError describing the first violation.
TreeTopology resolve_topology(const TreeStructure& tree);

// Full validation of a tree against a feature count, including leaf value widths.
void validate(const TreeStructure& tree, int feature_count);

// Validates every tree plus model-level invariants (uniform leaf width of 1 or num_class).
void validate(const CanonicalTreeModel& model);

// Reference traversal with <= going left. Returns the leaf position reached.
int traverse(const TreeStructure& tree, const TreeTopology& topology, std::span<const double> x);
int traverse(const TreeStructure& tree, std::span<const double> x);

}  // namespace treexfer
