#pragma once

// JSON Schema (draft 2020-12 subset) for every response body the HTTP API produces.
// Served at GET /api/schema; "responses" maps each endpoint to the definition its body follows.

namespace itot::api {

inline constexpr const char* kApiSchema = R"json({
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "$id": "itot-api",
  "responses": {
    "POST /api/trees": {"201": "Tree"},
    "GET /api/trees": {"200": "History"},
    "GET /api/trees/{id}": {"200": "Tree"},
    "POST /api/trees/{id}/nodes/{nid}/expand": {"202": "Accepted"},
    "POST /api/trees/{id}/nodes/{nid}/thoughts": {"202": "Accepted"},
    "POST /api/trees/{id}/nodes/{nid}/toggle": {"200": "Tree"},
    "PATCH /api/trees/{id}/dynamic": {"200": "Tree"},
    "PATCH /api/trees/{id}/settings": {"409": "Error"},
    "GET /api/trees/{id}/events/{expansion_id}": {"200": "StatusEvent"},
    "GET /api/examples": {"200": "Examples"},
    "*": {"4xx": "Error", "5xx": "Error"}
  },
  "$defs": {
    "NodeId": {"type": "string", "pattern": "^n(0|[1-9][0-9]*)$"},
    "GroupId": {"type": "string", "pattern": "^g(0|[1-9][0-9]*)$"},
    "Timestamp": {"type": "string", "pattern": "^[0-9]{4}-[0-9]{2}-[0-9]{2}T[0-9]{2}:[0-9]{2}:[0-9]{2}\\.[0-9]{3}Z$"},
    "Score": {"type": "number", "minimum": 0, "maximum": 1},
    "Settings": {
      "type": "object",
      "additionalProperties": false,
      "required": ["model_id", "temperature", "generation_method", "evaluation_method", "selection_method",
                   "grouping_method", "grouping_threshold", "seed", "vote_count"],
      "properties": {
        "model_id": {"type": "string", "minLength": 1},
        "temperature": {"type": "number", "minimum": 0, "maximum": 2},
        "generation_method": {"enum": ["sample", "propose"]},
        "evaluation_method": {"enum": ["comparative", "individual"]},
        "selection_method": {"enum": ["greedy", "sample"]},
        "grouping_method": {"enum": ["embedding", "logical", "none"]},
        "grouping_threshold": {"type": "number", "minimum": 0, "maximum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "vote_count": {"type": "integer", "minimum": 1}
      }
    },
    "Dynamic": {
      "type": "object",
      "additionalProperties": false,
      "required": ["generate_count", "display_count"],
      "properties": {
        "generate_count": {"type": "integer", "minimum": 1},
        "display_count": {"type": "integer", "minimum": 1}
      }
    },
    "Prompts": {
      "type": "object",
      "additionalProperties": false,
      "required": ["main_prompt", "example_prompt", "evaluation_prompt"],
      "properties": {
        "main_prompt": {"type": "string", "minLength": 1},
        "example_prompt": {"type": ["string", "null"]},
        "evaluation_prompt": {"type": ["string", "null"]}
      }
    },
    "Node": {
      "type": "object",
      "additionalProperties": false,
      "required": ["node_id", "parent_id", "layer", "text", "source", "score", "rank", "expansion_state",
                   "group_id", "children"],
      "properties": {
        "node_id": {"$ref": "#/$defs/NodeId"},
        "parent_id": {"anyOf": [{"$ref": "#/$defs/NodeId"}, {"type": "null"}]},
        "layer": {"type": "integer", "minimum": 0},
        "text": {"type": "string"},
        "source": {"enum": ["model", "user"]},
        "score": {"anyOf": [{"$ref": "#/$defs/Score"}, {"type": "null"}]},
        "rank": {"anyOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
        "expansion_state": {"enum": ["leaf", "expanded", "collapsed"]},
        "group_id": {"anyOf": [{"$ref": "#/$defs/GroupId"}, {"type": "null"}]},
        "children": {"type": "array", "items": {"$ref": "#/$defs/NodeId"}}
      }
    },
    "Group": {
      "type": "object",
      "additionalProperties": false,
      "required": ["group_id", "member_ids", "representative_id", "method", "evidence"],
      "properties": {
        "group_id": {"$ref": "#/$defs/GroupId"},
        "member_ids": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/NodeId"}},
        "representative_id": {"$ref": "#/$defs/NodeId"},
        "method": {"enum": ["embedding", "logical", "none"]},
        "evidence": {
          "type": "array",
          "items": {
            "type": "object",
            "additionalProperties": false,
            "required": ["pair", "similarity"],
            "properties": {
              "pair": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"$ref": "#/$defs/NodeId"}},
              "similarity": {"$ref": "#/$defs/Score"}
            }
          }
        }
      }
    },
    "Layer": {
      "type": "object",
      "additionalProperties": false,
      "required": ["parent_id", "expansion_id", "dynamic", "seed", "candidates", "warnings", "consistency"],
      "properties": {
        "parent_id": {"$ref": "#/$defs/NodeId"},
        "expansion_id": {"type": "string", "minLength": 1},
        "dynamic": {"$ref": "#/$defs/Dynamic"},
        "seed": {"type": "string", "pattern": "^[0-9]+$"},
        "candidates": {
          "type": "array",
          "items": {
            "type": "object",
            "additionalProperties": false,
            "required": ["text", "score", "source", "node_id"],
            "properties": {
              "text": {"type": "string"},
              "score": {"$ref": "#/$defs/Score"},
              "source": {"enum": ["model", "user"]},
              "node_id": {"anyOf": [{"$ref": "#/$defs/NodeId"}, {"type": "null"}]}
            }
          }
        },
        "warnings": {"type": "array", "items": {"type": "string"}},
        "consistency": {"anyOf": [{"$ref": "#/$defs/Score"}, {"type": "null"}]}
      }
    },
    "Tree": {
      "type": "object",
      "additionalProperties": false,
      "required": ["schema_version", "tree_id", "created_at", "settings", "dynamic", "prompts", "nodes", "groups",
                   "layers", "preferred_path", "active_path", "next_node_id", "next_group_id"],
      "properties": {
        "schema_version": {"const": 1},
        "tree_id": {"type": "string", "pattern": "^[A-Za-z0-9_-]{1,64}$"},
        "created_at": {"$ref": "#/$defs/Timestamp"},
        "settings": {"$ref": "#/$defs/Settings"},
        "dynamic": {"$ref": "#/$defs/Dynamic"},
        "prompts": {"$ref": "#/$defs/Prompts"},
        "nodes": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/Node"}},
        "groups": {"type": "array", "items": {"$ref": "#/$defs/Group"}},
        "layers": {"type": "array", "items": {"$ref": "#/$defs/Layer"}},
        "preferred_path": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/NodeId"}},
        "active_path": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/NodeId"}},
        "next_node_id": {"$ref": "#/$defs/NodeId"},
        "next_group_id": {"$ref": "#/$defs/GroupId"}
      }
    },
    "HistoryEntry": {
      "type": "object",
      "additionalProperties": false,
      "required": ["tree_id", "title", "created_at", "last_modified", "layer_count", "node_count"],
      "properties": {
        "tree_id": {"type": "string"},
        "title": {"type": "string"},
        "created_at": {"$ref": "#/$defs/Timestamp"},
        "last_modified": {"$ref": "#/$defs/Timestamp"},
        "layer_count": {"type": "integer", "minimum": 0},
        "node_count": {"type": "integer", "minimum": 1}
      }
    },
    "History": {
      "type": "object",
      "additionalProperties": false,
      "required": ["trees"],
      "properties": {"trees": {"type": "array", "items": {"$ref": "#/$defs/HistoryEntry"}}}
    },
    "Accepted": {
      "type": "object",
      "additionalProperties": false,
      "required": ["expansion_id", "tree_id", "events"],
      "properties": {
        "expansion_id": {"type": "string", "minLength": 1},
        "tree_id": {"type": "string"},
        "events": {"type": "string"}
      }
    },
    "StatusEvent": {
      "type": "object",
      "additionalProperties": false,
      "required": ["tree_id", "expansion_id", "phase", "detail", "sequence_no", "timestamp"],
      "properties": {
        "tree_id": {"type": "string"},
        "expansion_id": {"type": "string"},
        "phase": {"enum": ["generating", "evaluating", "selecting", "grouping", "done", "error"]},
        "detail": {"type": "string"},
        "sequence_no": {"type": "integer", "minimum": 1},
        "timestamp": {"$ref": "#/$defs/Timestamp"}
      }
    },
    "Example": {
      "type": "object",
      "additionalProperties": false,
      "required": ["title", "main_prompt", "example_prompt", "evaluation_prompt", "settings", "dynamic"],
      "properties": {
        "title": {"type": "string", "minLength": 1},
        "main_prompt": {"type": "string", "minLength": 1},
        "example_prompt": {"type": "string", "minLength": 1},
        "evaluation_prompt": {"type": "string", "minLength": 1},
        "settings": {"$ref": "#/$defs/Settings"},
        "dynamic": {"$ref": "#/$defs/Dynamic"}
      }
    },
    "Examples": {
      "type": "object",
      "additionalProperties": false,
      "required": ["examples"],
      "properties": {"examples": {"type": "array", "items": {"$ref": "#/$defs/Example"}}}
    },
    "Error": {
      "type": "object",
      "additionalProperties": false,
      "required": ["error"],
      "properties": {
        "error": {
          "type": "object",
          "additionalProperties": false,
          "required": ["code", "message"],
          "properties": {
            "code": {"type": "string", "pattern": "^[a-z]+(-[a-z]+)*$"},
            "message": {"type": "string"}
          }
        }
      }
    }
  }
})json";

}  // namespace itot::api
