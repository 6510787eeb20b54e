export function renderTileCard(card) {
    const classes = ['card'];
    if (card.rejected) {
        classes.push('rejected');
    }
    if (card.pending) {
        classes.push('pending');
    }
    const state = card.pending ? 'saving' : card.rejected ? 'rejected' : 'kept';
    return `<div class="${classes.join(' ')}" tabindex="0" data-tile-id="${card.tileId}">
    <img src="${card.thumbnailUrl}" alt="${card.tileId}">
    <div class="meta"><span class="label">${card.labelName}</span><span class="state">${state}</span></div>
    <div class="tile-id">${card.tileId}</div>
  </div>`;
}
export function renderGrid(cards) {
    if (cards.length === 0) {
        return `<p class="empty">No tiles on this page.</p>`;
    }
    return `<div class="grid">${cards.map(renderTileCard).join('')}</div>`;
}
