"""JSON Schemas for the wire protocol (the contract tests validate both
recorded fixtures and live responses against these)."""

PAIRS_REQUEST = {
    "type": "object",
    "required": ["source_wav_b64", "target_wav_b64", "init_prompt"],
    "properties": {
        "source_wav_b64": {"type": "string", "contentEncoding": "base64"},
        "target_wav_b64": {"type": "string", "contentEncoding": "base64"},
        "init_prompt": {"type": "string"},
        "opt": {
            "type": "object",
            "properties": {
                "t_inv": {"type": "integer", "minimum": 1},
                "t_adapt": {"type": "integer", "minimum": 1},
                "t_bias": {"type": "integer", "minimum": 0},
                "lora_rank": {"type": "integer", "minimum": 1},
                "lora_rank_uncond": {"type": "integer", "minimum": 1},
                "ddim_steps": {"type": "integer", "minimum": 1},
                "guidance_w": {"type": "number"},
                "lr_embed": {"type": "number", "exclusiveMinimum": 0},
                "lr_adapt": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

PAIRS_RESPONSE = {
    "type": "object",
    "required": ["pair_id"],
    "properties": {"pair_id": {"type": "string", "minLength": 1}},
    "additionalProperties": False,
}

MORPH_REQUEST = {
    "type": "object",
    "required": ["pair_id", "alpha"],
    "properties": {
        "pair_id": {"type": "string", "minLength": 1},
        "alpha": {"type": "number", "minimum": 0, "maximum": 1},
    },
    "additionalProperties": False,
}

MORPH_RESPONSE = {
    "type": "object",
    "required": ["wav_b64", "sample_rate"],
    "properties": {
        "wav_b64": {"type": "string", "contentEncoding": "base64"},
        "sample_rate": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

HEALTH_RESPONSE = {
    "type": "object",
    "required": ["status", "model_id"],
    "properties": {
        "status": {"type": "string"},
        "model_id": {"type": "string"},
    },
    "additionalProperties": False,
}

ERROR_RESPONSE = {
    "type": "object",
    "required": ["error"],
    "properties": {"error": {"type": "string"}},
    "additionalProperties": False,
}
