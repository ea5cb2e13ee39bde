import numpy as np
import pytest

from onlinevis.attention import sinusoidal_encoding_1d
from onlinevis.memory import (
    MemoryCrossAttention, MemoryQueue, MemoryToken, MemoryTokenizer, TemporalIndexEmbedding, select_instances,
)
from onlinevis.misc.errors import ContractError
from onlinevis.tensorcore import F, RngState, Tensor, check_mode, parameter

from .fixtures import dense_attention, linear


WIDTH, CLASSES = 8, 3


def tokens_for(frame: int, indices, rng: RngState, width: int=WIDTH):
    return [
        MemoryToken(embedding=Tensor(rng.normal((width,))), query_index=int(i), frame=frame, raw_query=rng.normal((width,)))
        for i in indices
    ]


def layer_norm(x, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(x.var(axis=-1, keepdims=True) + eps)


def test_select_instances_train_keeps_the_matches():
    np.testing.assert_array_equal(select_instances('train', k=4, matched=[7, 3]), [3, 7])
    scores = np.array([0.1, 0.9, 0.3, 0.8, 0.2])
    np.testing.assert_array_equal(select_instances('train', k=2, matched=[0, 1, 3, 4], scores=scores), [1, 3])
    assert len(select_instances('train', k=2, matched=[])) == 0


def test_select_instances_infer_takes_top_k_with_low_index_ties():
    np.testing.assert_array_equal(select_instances('infer', k=2, scores=np.array([0.9, 0.1, 0.5])), [0, 2])
    np.testing.assert_array_equal(select_instances('infer', k=2, scores=np.array([0.4, 0.4, 0.4])), [0, 1])
    with pytest.raises(ContractError):
        select_instances('infer', k=2)
    with pytest.raises(ContractError):
        select_instances('replay', k=2, matched=[1])


def test_memory_tokens_project_to_width_and_stop_gradient():
    rng = RngState(0)
    with check_mode():
        tokenizer = MemoryTokenizer(WIDTH, CLASSES, rng)
        q = parameter(rng.normal((5, WIDTH)))
        boxes = parameter(rng.uniform(0.2, 0.6, (5, 4)))
        scores = parameter(rng.uniform(0.1, 0.9, (5, CLASSES)))
        tokens = tokenizer.make_memory_tokens(q, boxes, scores, [1, 4], frame=3)

        assert [token.query_index for token in tokens] == [1, 4]
        assert all(token.frame == 3 and token.embedding.shape == (WIDTH,) for token in tokens)
        np.testing.assert_array_equal(tokens[1].raw_query, q.data[4])

        F.sum(F.stack([token.embedding for token in tokens])).backward()
        assert q.grad is None and boxes.grad is None and scores.grad is None
        assert tokenizer.proj.weight.grad is not None


def test_memory_tokens_with_identity_projection_copy_the_query():
    rng = RngState(1)
    with check_mode():
        tokenizer = MemoryTokenizer(WIDTH, CLASSES, rng)
        tokenizer.proj.weight.data = np.vstack([np.eye(WIDTH), np.zeros((4 + CLASSES, WIDTH))])
        q = Tensor(rng.normal((3, WIDTH)))
        tokens = tokenizer.make_memory_tokens(q, Tensor(rng.uniform(0, 1, (3, 4))), Tensor(rng.uniform(0, 1, (3, CLASSES))), [0, 2], frame=0)
        np.testing.assert_allclose(tokens[0].embedding.data, q.data[0], atol=1e-12)
        np.testing.assert_allclose(tokens[1].embedding.data, q.data[2], atol=1e-12)
        assert tokenizer.make_memory_tokens(q, Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, CLASSES))), [], frame=1) == []


def test_enqueue_keeps_the_last_d_frames():
    rng = RngState(2)
    queue = MemoryQueue(max_frames=4, max_tokens=3)
    assert queue.is_empty and queue.newest_frame is None
    queue.enqueue_frame(tokens_for(0, [0, 1], rng), 0)
    assert len(queue) == 1
    for t in range(1, 6):
        queue.enqueue_frame(tokens_for(t, [0, 2], rng), t)
    assert [slot.frame for slot in queue] == [2, 3, 4, 5]
    assert queue.num_tokens == 8 <= queue.max_frames * queue.max_tokens


def test_enqueue_contract_errors():
    rng = RngState(3)
    queue = MemoryQueue(max_frames=2, max_tokens=2)
    queue.enqueue_frame(tokens_for(4, [0], rng), 4)
    with pytest.raises(ContractError):
        queue.enqueue_frame(tokens_for(4, [1], rng), 4)
    with pytest.raises(ContractError):
        queue.enqueue_frame(tokens_for(3, [1], rng), 3)
    with pytest.raises(ContractError):
        queue.enqueue_frame(tokens_for(5, [0, 1, 2], rng), 5)
    with pytest.raises(ContractError):
        queue.enqueue_frame(tokens_for(5, [1, 1], rng), 5)
    with pytest.raises(ContractError):
        queue.enqueue_frame(tokens_for(6, [1], rng), 5)
    with pytest.raises(ContractError):
        MemoryQueue(max_frames=0, max_tokens=2)


def test_frames_without_selections_add_no_slot():
    rng = RngState(4)
    queue = MemoryQueue(max_frames=3, max_tokens=2)
    queue.enqueue_frame(tokens_for(0, [1], rng), 0)
    queue.enqueue_frame([], 1)
    queue.enqueue_frame(tokens_for(2, [0], rng), 2)
    assert [slot.frame for slot in queue] == [0, 2]
    _, indices, frames = queue.flatten()
    assert indices.tolist() == [1, 0] and frames.tolist() == [0, 2]


def test_temporal_index_embedding_is_relative():
    rng = RngState(5)
    embed = TemporalIndexEmbedding(6, WIDTH, rng)
    at_1 = embed(np.array([2]), np.array([4]), t=5).data
    at_2 = embed(np.array([2]), np.array([3]), t=5).data
    assert not np.allclose(at_1, at_2)
    later = embed(np.array([2]), np.array([10]), t=11).data
    np.testing.assert_array_equal(at_1, later)

    embed.index_embed.data[...] = 0.0
    np.testing.assert_allclose(embed(np.array([0, 3]), np.array([1, 1]), t=3).data, sinusoidal_encoding_1d([2, 2], WIDTH))
    with pytest.raises(ContractError):
        embed(np.array([0]), np.array([5]), t=5)


def test_cross_attention_with_empty_queue_is_identity():
    attn = MemoryCrossAttention(WIDTH, 2, 6, RngState(6))
    q = Tensor(RngState(7).normal((6, WIDTH)))
    assert attn(q, MemoryQueue(2, 2), 1) is q
    assert attn(q, None, 1) is q


def test_cross_attention_with_one_token():
    rng = RngState(8)
    with check_mode():
        attn = MemoryCrossAttention(WIDTH, 2, 6, rng)
        queue = MemoryQueue(2, 2)
        token = tokens_for(0, [3], rng)
        queue.enqueue_frame(token, 0)
        q = Tensor(rng.normal((6, WIDTH)))
        value = linear(attn.attn.out_proj, linear(attn.attn.v_proj, token[0].embedding.data[None]))
        np.testing.assert_allclose(attn(q, queue, 1).data, layer_norm(q.data + value), atol=1e-10)


def test_cross_attention_matches_dense_oracle():
    rng = RngState(9)
    with check_mode():
        attn = MemoryCrossAttention(WIDTH, 2, 6, rng)
        queue = MemoryQueue(max_frames=2, max_tokens=2)
        queue.enqueue_frame(tokens_for(0, [0, 4], rng), 0)
        queue.enqueue_frame(tokens_for(1, [1, 4], rng), 1)
        q = Tensor(rng.normal((6, WIDTH)))

        embeddings, indices, frames = queue.flatten()
        key_pos = attn.temporal(indices, frames, 2).data
        query_pos = attn.temporal.index_embed.data[:6]
        expected = layer_norm(q.data + dense_attention(attn.attn, q.data, embeddings.data, query_pos, key_pos))
        np.testing.assert_allclose(attn(q, queue, 2).data, expected, atol=1e-5)


def test_no_gradient_reaches_the_source_frame_through_memory():
    rng = RngState(10)
    with check_mode():
        tokenizer = MemoryTokenizer(WIDTH, CLASSES, rng)
        attn = MemoryCrossAttention(WIDTH, 2, 4, rng)
        q_source = parameter(rng.normal((4, WIDTH)))
        queue = MemoryQueue(2, 4)
        queue.enqueue_frame(tokenizer(q_source, Tensor(rng.uniform(0.2, 0.5, (4, 4))), Tensor(rng.uniform(0, 1, (4, CLASSES))), [0, 2], 0), 0)
        q_now = parameter(rng.normal((4, WIDTH)))
        F.sum(attn(q_now, queue, 1)).backward()
        assert q_source.grad is None
        assert q_now.grad is not None and np.abs(q_now.grad).sum() > 0
